//! Score a hand-built candidate batch with the safety filter and print the
//! per-candidate diagnostics: a short safe path, a long safe path, and one
//! that drives through an obstacle.
//!
//! Run with: `cargo run --example safety_filter`

use difftraj::filter::{score_batch, select_trajectory, FilterConfig};
use difftraj::geom::Pose;
use difftraj::scene::{DynamicObstacle, OccupancyGrid, SceneSpec};
use difftraj::traj::Trajectory;
use difftraj::vehicle::VehicleParams;

fn straight(n: usize, spacing: f64, y: f64) -> Trajectory {
    let poses = (0..n)
        .map(|i| Pose::from_xy_yaw(i as f64 * spacing, y, 0.0).unwrap())
        .collect();
    Trajectory::new(poses, 0.1).unwrap()
}

fn main() -> difftraj::Result<()> {
    // A stationary obstacle half a meter off the corridor.
    let scene = SceneSpec::new(
        OccupancyGrid::new(200, 200, 0.05, (-2.0, -2.0))?,
        vec![DynamicObstacle {
            x: 0.5,
            y: 0.5,
            q_z: 0.0,
            q_w: 1.0,
            speed: 0.0,
            duration: 1.0,
        }],
        "demo",
    );
    let params = VehicleParams::default();
    let cfg = FilterConfig {
        n_filter: 3,
        ..FilterConfig::default()
    };

    let batch = vec![
        straight(21, 0.0625, 0.0), // short, clear of the obstacle
        straight(21, 0.125, 0.0),  // twice as long, same clearance
        straight(21, 0.0625, 0.5), // drives straight through it
    ];
    let (scores, diags) = score_batch(&batch, &scene, &cfg, &params);
    for (i, (score, d)) in scores.iter().zip(&diags).enumerate() {
        println!(
            "candidate {i}: length {:.2} m, rho {:.2} m, J_safe {:.3}, J {:.3}, yaw_ok {}",
            d.length, d.rho, d.j_safe, score, d.yaw_ok
        );
    }

    let (best, report) = select_trajectory(|_| Ok(batch.clone()), &scene, &cfg, &params)?;
    match best {
        Some(traj) => println!(
            "selected candidate {} after {} attempt(s); {} poses",
            report.selected.unwrap(),
            report.attempts,
            traj.poses.len()
        ),
        None => println!("all candidates rejected after {} attempts", report.attempts),
    }
    Ok(())
}
