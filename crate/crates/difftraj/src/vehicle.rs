//! Kinematic bicycle model: state, control, parameter set, and the Heun
//! (improved-Euler) discretization step.

use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use serde::{Deserialize, Serialize};

/// Vehicle state `[x, y, phi, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to `(-PI, PI]`.
    pub phi: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, phi: f64, v: f64) -> Self {
        VehicleState {
            x,
            y,
            phi: wrap_angle(phi),
            v,
        }
    }
}

/// Control input `[delta, a]`: steering angle and acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub delta: f64,
    pub a: f64,
}

impl Control {
    pub fn new(delta: f64, a: f64) -> Self {
        Control { delta, a }
    }

    pub fn zero() -> Self {
        Control { delta: 0.0, a: 0.0 }
    }
}

/// Physical vehicle parameters and state/control bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheelbase (m).
    pub wheelbase: f64,
    /// Footprint width (m).
    pub width: f64,
    /// Footprint length (m).
    pub length: f64,
    /// Maximum yaw rate (rad/s).
    pub w_max: f64,
    /// Speed bound: `|v| <= v_max` (m/s).
    pub v_max: f64,
    /// Steering bound: `|delta| <= delta_max` (rad).
    pub delta_max: f64,
    /// Acceleration bound: `|a| <= a_max` (m/s^2).
    pub a_max: f64,
}

impl Default for VehicleParams {
    /// An F1TENTH-class car at desk scale.
    fn default() -> Self {
        VehicleParams {
            wheelbase: 0.33,
            width: 0.28,
            length: 0.5,
            w_max: 3.2,
            v_max: 1.5,
            delta_max: 0.4,
            a_max: 2.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.wheelbase,
            self.width,
            self.length,
            self.w_max,
            self.v_max,
            self.delta_max,
            self.a_max,
        ];
        if all.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::invalid("vehicle parameters must be strictly positive"));
        }
        Ok(())
    }

    /// Clamp a control to its box bounds.
    pub fn clamp_control(&self, u: Control) -> Control {
        Control {
            delta: u.delta.clamp(-self.delta_max, self.delta_max),
            a: u.a.clamp(-self.a_max, self.a_max),
        }
    }
}

/// Continuous-time bicycle dynamics `f(state, u) = [v cos phi, v sin phi,
/// v tan delta / l_w, a]`.
fn dynamics(s: &VehicleState, u: &Control, wheelbase: f64) -> [f64; 4] {
    [
        s.v * s.phi.cos(),
        s.v * s.phi.sin(),
        s.v * u.delta.tan() / wheelbase,
        u.a,
    ]
}

/// One Heun (improved-Euler) step of the bicycle model over `t_s` seconds.
/// The resulting speed is clamped to `|v| <= v_max`.
pub fn kinematic_step(
    state: &VehicleState,
    u: &Control,
    t_s: f64,
    params: &VehicleParams,
) -> VehicleState {
    let k1 = dynamics(state, u, params.wheelbase);
    let mid = VehicleState {
        x: state.x + 0.5 * t_s * k1[0],
        y: state.y + 0.5 * t_s * k1[1],
        phi: state.phi + 0.5 * t_s * k1[2],
        v: state.v + 0.5 * t_s * k1[3],
    };
    let k2 = dynamics(&mid, u, params.wheelbase);
    VehicleState {
        x: state.x + t_s * k2[0],
        y: state.y + t_s * k2[1],
        phi: wrap_angle(state.phi + t_s * k2[2]),
        v: (state.v + t_s * k2[3]).clamp(-params.v_max, params.v_max),
    }
}
