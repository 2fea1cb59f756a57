//! The planner's central object: a fixed-horizon pose sequence sampled at a
//! constant interval.

use crate::error::{Error, Result};
use crate::geom::Pose;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Default trajectory horizon.
pub const DEFAULT_HORIZON: usize = 128;

/// A `4 x L` sequence of `[x, y, q_z, q_w]` poses at a constant sampling
/// interval `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>, dt: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("trajectory must not be empty"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(Trajectory { poses, dt })
    }

    pub fn horizon(&self) -> usize {
        self.poses.len()
    }

    /// Pad by duplicating the last pose, or truncate, to exactly `l` poses.
    pub fn pad_or_truncate(mut self, l: usize) -> Self {
        if self.poses.len() > l {
            self.poses.truncate(l);
        } else if let Some(&last) = self.poses.last() {
            while self.poses.len() < l {
                self.poses.push(last);
            }
        }
        self
    }

    pub fn start(&self) -> &Pose {
        &self.poses[0]
    }

    pub fn goal(&self) -> &Pose {
        self.poses.last().expect("non-empty")
    }

    /// Column-major `[4, L]` array view: rows are `x, y, q_z, q_w`.
    pub fn to_array(&self) -> Array2<f64> {
        let l = self.poses.len();
        let mut a = Array2::zeros((4, l));
        for (j, p) in self.poses.iter().enumerate() {
            a[[0, j]] = p.x;
            a[[1, j]] = p.y;
            a[[2, j]] = p.q_z;
            a[[3, j]] = p.q_w;
        }
        a
    }

    /// Rebuild from a `[4, L]` array, renormalizing each quaternion.
    pub fn from_array(a: &Array2<f64>, dt: f64) -> Result<Self> {
        if a.nrows() != 4 {
            return Err(Error::ShapeMismatch {
                expected: "4 rows".into(),
                got: format!("{} rows", a.nrows()),
            });
        }
        let poses = (0..a.ncols())
            .map(|j| Pose::from_raw(a[[0, j]], a[[1, j]], a[[2, j]], a[[3, j]]))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses, dt)
    }

    /// Per-pose yaw series.
    pub fn yaws(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.yaw()).collect()
    }

    /// Per-pose `(x, y)` series.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.poses.iter().map(|p| (p.x, p.y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize) -> Trajectory {
        let poses = (0..n)
            .map(|i| Pose::from_xy_yaw(i as f64 * 0.1, 0.0, 0.0).unwrap())
            .collect();
        Trajectory::new(poses, 0.1).unwrap()
    }

    #[test]
    fn pad_duplicates_last_pose() {
        let t = straight(30).pad_or_truncate(128);
        assert_eq!(t.horizon(), 128);
        for p in &t.poses[30..] {
            assert_eq!(*p, t.poses[29]);
        }
    }

    #[test]
    fn truncate_keeps_prefix() {
        let t = straight(150).pad_or_truncate(128);
        assert_eq!(t.horizon(), 128);
        assert!((t.poses[127].x - 12.7).abs() < 1e-12);
    }

    #[test]
    fn array_round_trip() {
        let t = straight(16);
        let back = Trajectory::from_array(&t.to_array(), t.dt).unwrap();
        assert_eq!(t, back);
    }
}
