//! Evaluate a planner closed-loop: plan from several starts, track each
//! plan with pure pursuit, and aggregate the benchmark metrics.
//!
//! The planner here is an analytic Gaussian denoiser centered on a straight
//! line to the goal, run through the full sample-and-filter pipeline.
//!
//! Run with: `cargo run --example closed_loop_eval`

use difftraj::denoiser::GaussianOracleDenoiser;
use difftraj::eval::{evaluate, EvalConfig};
use difftraj::geom::Pose;
use difftraj::plan::{conditioning_for, plan, PlanConfig};
use difftraj::scene::{OccupancyGrid, SceneSpec};
use difftraj::schedule::NoiseSchedule;
use difftraj::vehicle::VehicleParams;
use ndarray::Array2;

fn main() -> difftraj::Result<()> {
    let scene = SceneSpec::new(OccupancyGrid::new(120, 120, 0.05, (0.0, 0.0))?, vec![], "open");
    let goal = Pose::from_xy_yaw(5.0, 3.0, 0.0)?;
    let params = VehicleParams::default();
    let l = 64;

    let starts: Vec<Pose> = (0..6)
        .map(|i| Pose::from_xy_yaw(0.5, 0.5 + 0.5 * i as f64, 0.0).unwrap())
        .collect();

    let cfg = PlanConfig::default();
    let report = evaluate(
        &starts,
        |i, start| {
            // A per-start oracle: straight line to the goal, 3 cm spread.
            let mu = Array2::from_shape_fn((4, l), |(c, j)| {
                let f = j as f64 / (l - 1) as f64;
                match c {
                    0 => start.x + (goal.x - start.x) * f,
                    1 => start.y + (goal.y - start.y) * f,
                    2 => 0.0,
                    _ => 1.0,
                }
            });
            let oracle = GaussianOracleDenoiser::new(
                mu,
                Array2::from_elem((4, l), 0.03 * 0.03),
                NoiseSchedule::standard(),
            )?;
            let cond = conditioning_for(&scene, start, &goal, l, cfg.dt);
            let run_cfg = PlanConfig {
                sampler: difftraj::sample::SamplerConfig {
                    seed: i as u64,
                    ..cfg.sampler
                },
                ..cfg
            };
            Ok(plan(&oracle, &cond, &scene, &run_cfg, &params)?.trajectory)
        },
        &scene,
        &EvalConfig::default(),
        &params,
    )?;

    println!("runs:        {}", report.n_runs);
    println!("F.Rate:      {:.1}%", 100.0 * report.f_rate);
    println!("C.Rate:      {:.1}%", 100.0 * report.c_rate);
    println!("mean C.T:    {:.3} s", report.mean_plan_time);
    println!("mean M.TE:   {:.3} m", report.mean_tracking_error);
    println!("Danger:      {:.1}%", 100.0 * report.danger);
    Ok(())
}
