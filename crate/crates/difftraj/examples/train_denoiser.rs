//! Train a small trajectory denoiser on a handful of demonstrations and
//! watch the noise-prediction loss fall from its initial value of 1.
//!
//! Run with: `cargo run --example train_denoiser`

use difftraj::datagen::{build_dataset, sample_starts, DatagenConfig};
use difftraj::denoiser::NormStats;
use difftraj::model::UNetConfig;
use difftraj::mpc::MpcConfig;
use difftraj::scenes;
use difftraj::train::{train, TrainConfig};
use difftraj::vehicle::VehicleParams;

fn main() -> difftraj::Result<()> {
    let scene = scenes::toy_static();
    let goal = scenes::toy_goal();
    let params = VehicleParams::default();
    let datagen = DatagenConfig::default();
    let mpc = MpcConfig {
        v_ref: 0.5,
        gamma: 0.0,
        ..MpcConfig::default()
    };
    let starts = sample_starts(&scene, &goal, 10, 7, &params, &datagen, Some(5.5));
    let (dataset, _) = build_dataset(&scene, &starts, &goal, &mpc, &params, &datagen);
    println!("training on {} demos", dataset.demos.len());

    // Fixing normalization to the scene bounds keeps this model composable
    // with others trained on the same map.
    let (x0, y0, x1, y1) = scene.bounds();
    let norm = NormStats::from_bounds(x0, y0, x1, y1)?;

    let cfg = TrainConfig {
        net: UNetConfig {
            channels: 16,
            horizon: dataset.horizon,
            ..UNetConfig::default()
        },
        steps: 300,
        seed: 7,
        ..TrainConfig::default()
    };
    let (_denoiser, report) = train(&dataset, &cfg, Some(norm))?;

    println!("parameters: {}", report.n_params);
    for (step, loss) in report.losses.iter().enumerate().step_by(50) {
        println!("step {step:4}: loss {loss:.4}");
    }
    println!("final loss: {:.4}", report.losses.last().unwrap());
    Ok(())
}
