//! Planar poses with quaternion-encoded yaw, angle utilities, and the
//! rectangular vehicle footprint.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Wrap an angle to `(-PI, PI]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    } else if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Smallest signed difference `a - b` on the circle, in `(-PI, PI]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Yaw angle to the `(q_z, q_w)` pair of a planar rotation quaternion.
///
/// The sign is canonicalized to `q_w >= 0` so that equal headings compare
/// equal after construction.
pub fn yaw_to_quat(phi: f64) -> Result<(f64, f64)> {
    if !phi.is_finite() {
        return Err(Error::invalid("yaw must be finite"));
    }
    let (mut q_z, mut q_w) = ((phi / 2.0).sin(), (phi / 2.0).cos());
    if q_w < 0.0 {
        q_z = -q_z;
        q_w = -q_w;
    }
    Ok((q_z, q_w))
}

/// Recover yaw from `(q_z, q_w)`, wrapped to `(-PI, PI]`.
pub fn quat_to_yaw(q_z: f64, q_w: f64) -> f64 {
    wrap_angle(2.0 * q_z.atan2(q_w))
}

/// A planar pose: Cartesian position plus the two quaternion components
/// encoding yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub q_z: f64,
    pub q_w: f64,
}

impl Pose {
    /// Build a pose from position and yaw. The quaternion is unit-norm and
    /// sign-canonical by construction.
    pub fn from_xy_yaw(x: f64, y: f64, phi: f64) -> Result<Self> {
        let (q_z, q_w) = yaw_to_quat(phi)?;
        Ok(Pose { x, y, q_z, q_w })
    }

    /// Build from raw components, renormalizing the quaternion.
    pub fn from_raw(x: f64, y: f64, q_z: f64, q_w: f64) -> Result<Self> {
        let n = (q_z * q_z + q_w * q_w).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid("quaternion components must have nonzero norm"));
        }
        let (mut q_z, mut q_w) = (q_z / n, q_w / n);
        if q_w < 0.0 {
            q_z = -q_z;
            q_w = -q_w;
        }
        Ok(Pose { x, y, q_z, q_w })
    }

    pub fn yaw(&self) -> f64 {
        quat_to_yaw(self.q_z, self.q_w)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Four corners of a `length x width` rectangle centered on `(x, y)` and
/// rotated by `yaw`. Order: front-left, front-right, rear-right, rear-left.
pub fn footprint_vertices(pose: &Pose, length: f64, width: f64) -> [(f64, f64); 4] {
    let phi = pose.yaw();
    let (c, s) = (phi.cos(), phi.sin());
    let (hl, hw) = (length / 2.0, width / 2.0);
    let local = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)];
    local.map(|(lx, ly)| (pose.x + c * lx - s * ly, pose.y + s * lx + c * ly))
}
