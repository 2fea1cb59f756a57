//! Rule-based safety filter: score a candidate batch on length,
//! acceleration, steering, and obstacle clearance, gate on yaw-rate
//! continuity, and select one executable trajectory with retries.

use crate::error::Result;
use crate::geom::angle_diff;
use crate::scene::{footprint_collides, point_to_footprint_distance, DistanceField, SceneSpec};
use crate::traj::Trajectory;
use crate::vehicle::VehicleParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Candidates sampled per attempt.
    pub n_filter: usize,
    /// Attempts before returning an empty result.
    pub n_retry: usize,
    /// Weights of the length, acceleration, steering, and safety terms.
    pub omega: [f64; 4],
    /// Penalty marking a candidate as unusable.
    pub v_inf: f64,
    /// Sampling interval of candidate trajectories.
    pub dt: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            n_filter: 8,
            n_retry: 3,
            omega: [1.0; 4],
            v_inf: 1e6,
            dt: 0.1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_filter < 2 {
            return Err(crate::Error::invalid(
                "n_filter must be at least 2 for min-max normalization",
            ));
        }
        if self.omega.iter().any(|&w| w < 0.0) {
            return Err(crate::Error::invalid("weights must be non-negative"));
        }
        Ok(())
    }
}

/// Velocity below which the steering angle is defined as zero; padded
/// trajectory tails are stationary and must not poison the steering norm.
pub const V_EPS: f64 = 1e-3;

/// Finite-difference kinematics of one candidate.
#[derive(Debug, Clone)]
pub struct TrajectoryKinematics {
    /// Per-segment displacements, `L - 1` entries.
    pub d: Vec<f64>,
    /// Total length.
    pub total: f64,
    /// Per-segment speeds, `L - 1` entries.
    pub v: Vec<f64>,
    /// Per-step accelerations, `L - 2` entries.
    pub a: Vec<f64>,
    /// Per-segment yaw rates, `L - 1` entries.
    pub r: Vec<f64>,
    /// Per-segment steering angles, `L - 1` entries.
    pub delta: Vec<f64>,
}

pub fn trajectory_kinematics(traj: &Trajectory, l_w: f64) -> TrajectoryKinematics {
    let dt = traj.dt;
    let yaws = traj.yaws();
    let d: Vec<f64> = traj
        .poses
        .windows(2)
        .map(|w| w[0].distance_to(&w[1]))
        .collect();
    let v: Vec<f64> = d.iter().map(|&di| di / dt).collect();
    let a: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let r: Vec<f64> = yaws
        .windows(2)
        .map(|w| angle_diff(w[1], w[0]) / dt)
        .collect();
    let delta: Vec<f64> = r
        .iter()
        .zip(v.iter())
        .map(|(&ri, &vi)| {
            if vi.abs() > V_EPS {
                (l_w * ri / vi).atan()
            } else {
                0.0
            }
        })
        .collect();
    TrajectoryKinematics {
        total: d.iter().sum(),
        d,
        v,
        a,
        r,
        delta,
    }
}

/// `(x - min) / (max - min)`; a degenerate spread maps everything to zero.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if !(spread > 0.0) || !spread.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&x| (x - lo) / spread).collect()
}

/// Per-point clearances and their minimum over a candidate.
#[derive(Debug, Clone)]
pub struct ClearanceReport {
    pub per_point: Vec<f64>,
    /// Minimum clearance; zero means an overlap somewhere.
    pub rho: f64,
}

/// Minimum distance from the vehicle footprint to static geometry and to
/// every dynamic obstacle evaluated at the matching time index. The static
/// field is passed in so batches share one distance transform.
pub fn clearance(
    traj: &Trajectory,
    scene: &SceneSpec,
    field: &DistanceField,
    params: &VehicleParams,
) -> ClearanceReport {
    let per_point: Vec<f64> = traj
        .poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut best = f64::INFINITY;
            if footprint_collides(&scene.grid, pose, params) {
                return 0.0;
            }
            for (vx, vy) in crate::geom::footprint_vertices(pose, params.length, params.width) {
                best = best.min(field.sample(vx, vy));
            }
            let t = i as f64 * traj.dt;
            for obs in &scene.dynamic {
                let p = obs.position(t);
                best = best.min(point_to_footprint_distance(
                    p,
                    pose,
                    params.length,
                    params.width,
                ));
            }
            best
        })
        .collect();
    let rho = per_point.iter().cloned().fold(f64::INFINITY, f64::min);
    ClearanceReport { per_point, rho }
}

/// Per-candidate score breakdown, exposed for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    pub length: f64,
    pub norm_length: f64,
    pub accel_norm: f64,
    pub steer_norm: f64,
    pub rho: f64,
    pub j_safe: f64,
    pub j: f64,
    pub yaw_ok: bool,
}

/// Score every candidate:
/// `J_i = w1 * Lnorm_i + w2 * |a_i| + w3 * |delta_i| + w4 * J_safe_i`,
/// where the length scalar and the per-step acceleration/steering series are
/// min-max normalized across the batch, the series terms enter through their
/// Euclidean norms, and `J_safe = 1/(rho + 1)` for clear candidates or
/// `V_inf` on any overlap.
pub fn score_batch(
    batch: &[Trajectory],
    scene: &SceneSpec,
    cfg: &FilterConfig,
    params: &VehicleParams,
) -> (Vec<f64>, Vec<CandidateDiagnostics>) {
    let field = DistanceField::build(&scene.grid);
    let per_candidate: Vec<(TrajectoryKinematics, ClearanceReport, f64)> = batch
        .par_iter()
        .map(|traj| {
            let kin = trajectory_kinematics(traj, params.wheelbase);
            let clear = clearance(traj, scene, &field, params);
            let yaw = yaw_continuity(traj, cfg, params);
            (kin, clear, yaw)
        })
        .collect();

    let n = batch.len();
    let lengths: Vec<f64> = per_candidate.iter().map(|(k, _, _)| k.total).collect();
    let norm_lengths = minmax_normalize(&lengths);

    // Normalize each step index across candidates, then take per-candidate
    // Euclidean norms of the resulting series.
    let series_norms = |extract: fn(&TrajectoryKinematics) -> &Vec<f64>| -> Vec<f64> {
        let steps = per_candidate
            .iter()
            .map(|(k, _, _)| extract(k).len())
            .min()
            .unwrap_or(0);
        let mut sums = vec![0.0; n];
        let mut column = vec![0.0; n];
        for j in 0..steps {
            for (i, (k, _, _)) in per_candidate.iter().enumerate() {
                column[i] = extract(k)[j];
            }
            for (i, x) in minmax_normalize(&column).into_iter().enumerate() {
                sums[i] += x * x;
            }
        }
        sums.into_iter().map(f64::sqrt).collect()
    };
    let accel_norms = series_norms(|k| &k.a);
    let steer_norms = series_norms(|k| &k.delta);

    let [w1, w2, w3, w4] = cfg.omega;
    let mut scores = Vec::with_capacity(n);
    let mut diags = Vec::with_capacity(n);
    for i in 0..n {
        let rho = per_candidate[i].1.rho;
        let j_safe = if rho > 0.0 { 1.0 / (rho + 1.0) } else { cfg.v_inf };
        let j = w1 * norm_lengths[i] + w2 * accel_norms[i] + w3 * steer_norms[i] + w4 * j_safe;
        scores.push(j);
        diags.push(CandidateDiagnostics {
            length: lengths[i],
            norm_length: norm_lengths[i],
            accel_norm: accel_norms[i],
            steer_norm: steer_norms[i],
            rho,
            j_safe,
            j,
            yaw_ok: per_candidate[i].2 == 0.0,
        });
    }
    (scores, diags)
}

/// Zero when every wrapped yaw step satisfies `|dphi| < w_max * dt`
/// (strict), `V_inf` otherwise.
pub fn yaw_continuity(traj: &Trajectory, cfg: &FilterConfig, params: &VehicleParams) -> f64 {
    let bound = params.w_max * traj.dt;
    let yaws = traj.yaws();
    let ok = yaws
        .windows(2)
        .all(|w| angle_diff(w[1], w[0]).abs() < bound);
    if ok {
        0.0
    } else {
        cfg.v_inf
    }
}

/// Outcome of one selection call, including retry diagnostics.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub attempts: usize,
    pub diagnostics: Vec<CandidateDiagnostics>,
    pub selected: Option<usize>,
}

/// Sample up to `n_retry` batches and return the first acceptable argmin.
///
/// A batch's best candidate is accepted iff its score is strictly below
/// `V_inf` and its yaw continuity check passes; ties break to the lowest
/// batch index. Exhausting the retries yields `None` (an empty plan, not an
/// error).
pub fn select_trajectory<F>(
    mut sampler: F,
    scene: &SceneSpec,
    cfg: &FilterConfig,
    params: &VehicleParams,
) -> Result<(Option<Trajectory>, SelectionReport)>
where
    F: FnMut(usize) -> Result<Vec<Trajectory>>,
{
    cfg.validate()?;
    let mut last_diags = Vec::new();
    for attempt in 0..cfg.n_retry {
        let batch = sampler(attempt)?;
        let (scores, diags) = score_batch(&batch, scene, cfg, params);
        let best = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
            .map(|(i, _)| i)
            .expect("non-empty batch");
        let accept = scores[best] < cfg.v_inf
            && yaw_continuity(&batch[best], cfg, params) == 0.0;
        if accept {
            return Ok((
                Some(batch.into_iter().nth(best).expect("index in range")),
                SelectionReport {
                    attempts: attempt + 1,
                    diagnostics: diags,
                    selected: Some(best),
                },
            ));
        }
        last_diags = diags;
    }
    Ok((
        None,
        SelectionReport {
            attempts: cfg.n_retry,
            diagnostics: last_diags,
            selected: None,
        },
    ))
}
