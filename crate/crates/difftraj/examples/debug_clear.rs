//! Temporary diagnostic: DDIM vs DDPM corner-cutting from a fixed start.

use difftraj::ckpt::load_checkpoint;
use difftraj::denoiser::Denoiser;
use difftraj::filter::clearance;
use difftraj::plan::conditioning_for;
use difftraj::sample::{sample_one, SampleMethod, SamplerConfig};
use difftraj::scene::DistanceField;
use difftraj::scenes;
use difftraj::vehicle::VehicleParams;
use std::path::Path;

fn main() -> difftraj::Result<()> {
    let path = std::env::args().nth(1).unwrap_or("/tmp/smoke/stm_pos8k.ckpt".into());
    let d = load_checkpoint(Path::new(&path))?;
    let scene = scenes::toy_static();
    let field = DistanceField::build(&scene.grid);
    let params = VehicleParams::default();
    let goal = scenes::toy_goal();
    let start = difftraj::geom::Pose::from_xy_yaw(1.0, 1.0, 1.1)?;
    let cond = conditioning_for(&scene, &start, &goal, d.horizon(), d.dt);
    for method in [SampleMethod::Ddim { steps: 8 }, SampleMethod::Ddpm] {
        let mut safe = 0;
        let mut band_x = Vec::new();
        for seed in 0..16u64 {
            let cfg = SamplerConfig {
                method,
                seed,
                clip_x0: Some(1.0),
                warm_start: true,
            };
            let traj = sample_one(&d, &cond, &cfg, d.dt)?;
            let rep = clearance(&traj, &scene, &field, &params);
            if rep.rho > 0.0 {
                safe += 1;
            }
            // Mean x while crossing the block band.
            let xs: Vec<f64> = traj
                .poses
                .iter()
                .filter(|p| p.y >= 2.4 && p.y <= 3.2)
                .map(|p| p.x)
                .collect();
            if !xs.is_empty() {
                band_x.push(xs.iter().sum::<f64>() / xs.len() as f64);
            }
            let _ = field.sample(0.0, 0.0);
        }
        let mean = band_x.iter().sum::<f64>() / band_x.len().max(1) as f64;
        println!("{method:?}: safe {safe}/16, band mean x {mean:.2} (expert ~1.8)");
    }
    Ok(())
}
