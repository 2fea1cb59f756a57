//! Closed-loop evaluation: plan from held-out starts, track the plan with
//! pure pursuit, and aggregate failure, collision, timing, danger, and
//! tracking-error metrics.

use crate::filter::{clearance, ClearanceReport};
use crate::geom::Pose;
use crate::scene::{DistanceField, SceneSpec};
use crate::track::{pure_pursuit_track, TrackConfig};
use crate::traj::Trajectory;
use crate::vehicle::VehicleParams;
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Executed points closer than this to an obstacle count as dangerous.
    pub danger_threshold: f64,
    pub track: TrackConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            danger_threshold: 0.08,
            track: TrackConfig::default(),
        }
    }
}

/// One planning-plus-tracking run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub start: Pose,
    /// Planner produced a trajectory (an empty plan is a failure, N_f).
    pub planned: bool,
    /// Executed footprint overlapped an obstacle at some point (N_c).
    pub collided: bool,
    /// Wall-clock planning time in seconds (C.T).
    pub plan_time: f64,
    /// Mean time-aligned tracking error; zero for failed runs.
    pub tracking_error: f64,
    /// Minimum clearance along the executed trajectory.
    pub min_clearance: f64,
    /// Fraction of executed points with clearance below the threshold.
    pub danger_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_runs: usize,
    pub n_fail: usize,
    pub n_collide: usize,
    /// F.Rate = N_f / N.
    pub f_rate: f64,
    /// C.Rate = (N_f + N_c) / N.
    pub c_rate: f64,
    /// Mean wall-clock planning time over all runs (C.T).
    pub mean_plan_time: f64,
    /// Mean time-aligned tracking error over tracked runs (M.TE).
    pub mean_tracking_error: f64,
    /// Mean danger fraction over tracked runs.
    pub danger: f64,
    pub runs: Vec<RunRecord>,
}

impl EvalReport {
    /// Aggregate per-run records into the summary metrics.
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let n = runs.len();
        let n_fail = runs.iter().filter(|r| !r.planned).count();
        let n_collide = runs.iter().filter(|r| r.planned && r.collided).count();
        let tracked: Vec<&RunRecord> = runs.iter().filter(|r| r.planned).collect();
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let plan_times: Vec<f64> = runs.iter().map(|r| r.plan_time).collect();
        let errors: Vec<f64> = tracked.iter().map(|r| r.tracking_error).collect();
        let dangers: Vec<f64> = tracked.iter().map(|r| r.danger_fraction).collect();
        EvalReport {
            n_runs: n,
            n_fail,
            n_collide,
            f_rate: if n == 0 { 0.0 } else { n_fail as f64 / n as f64 },
            c_rate: if n == 0 {
                0.0
            } else {
                (n_fail + n_collide) as f64 / n as f64
            },
            mean_plan_time: mean(&plan_times),
            mean_tracking_error: mean(&errors),
            danger: mean(&dangers),
            runs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Relative planning-time gain against a baseline (M.RP).
pub fn relative_planning_gain(baseline_ct: f64, ct: f64) -> f64 {
    (baseline_ct - ct) / baseline_ct
}

/// Run one start through the planner and the tracker.
pub fn run_one<P>(
    start: &Pose,
    planner: P,
    scene: &SceneSpec,
    field: &DistanceField,
    cfg: &EvalConfig,
    params: &VehicleParams,
) -> Result<RunRecord>
where
    P: FnOnce(&Pose) -> Result<Option<Trajectory>>,
{
    let t0 = Instant::now();
    let plan = planner(start)?;
    let plan_time = t0.elapsed().as_secs_f64();
    let Some(traj) = plan else {
        return Ok(RunRecord {
            start: *start,
            planned: false,
            collided: false,
            plan_time,
            tracking_error: 0.0,
            min_clearance: f64::INFINITY,
            danger_fraction: 0.0,
        });
    };
    let tracked = pure_pursuit_track(&traj, params, &cfg.track);
    let ClearanceReport { per_point, rho } = clearance(&tracked.executed, scene, field, params);
    let dangerous = per_point
        .iter()
        .filter(|&&c| c < cfg.danger_threshold)
        .count();
    Ok(RunRecord {
        start: *start,
        planned: true,
        collided: rho <= 0.0,
        plan_time,
        tracking_error: tracked.tracking_error,
        min_clearance: rho,
        danger_fraction: dangerous as f64 / per_point.len() as f64,
    })
}

/// Evaluate a planner over a set of start poses, in parallel.
///
/// The planner receives the run index (for independent seeding) and the
/// start pose; returning `Ok(None)` records a planning failure, not an
/// error.
pub fn evaluate<P>(
    starts: &[Pose],
    planner: P,
    scene: &SceneSpec,
    cfg: &EvalConfig,
    params: &VehicleParams,
) -> Result<EvalReport>
where
    P: Fn(usize, &Pose) -> Result<Option<Trajectory>> + Sync,
{
    let field = DistanceField::build(&scene.grid);
    let runs: Result<Vec<RunRecord>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| run_one(start, |s| planner(i, s), scene, &field, cfg, params))
        .collect();
    Ok(EvalReport::from_runs(runs?))
}
