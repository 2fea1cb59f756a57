//! Generate a small batch of MPC expert demonstrations on the toy static
//! scene and print dataset statistics.
//!
//! Run with: `cargo run --example generate_data`

use difftraj::datagen::{build_dataset, sample_starts, DatagenConfig};
use difftraj::mpc::MpcConfig;
use difftraj::scenes;
use difftraj::vehicle::VehicleParams;

fn main() -> difftraj::Result<()> {
    let scene = scenes::toy_static();
    let goal = scenes::toy_goal();
    let params = VehicleParams::default();
    let cfg = DatagenConfig::default();
    let mpc = MpcConfig {
        v_ref: 0.5,
        gamma: 0.0,
        ..MpcConfig::default()
    };

    let starts = sample_starts(&scene, &goal, 8, 42, &params, &cfg, Some(5.5));
    println!("sampled {} feasible starts", starts.len());

    let (dataset, failures) = build_dataset(&scene, &starts, &goal, &mpc, &params, &cfg);
    println!(
        "dataset: {} demos, horizon {}, dt {} s, {} failures",
        dataset.demos.len(),
        dataset.horizon,
        dataset.dt,
        failures.len()
    );
    for f in &failures {
        println!("  start {} failed: {}", f.start_index, f.reason);
    }

    for (i, demo) in dataset.demos.iter().take(3).enumerate() {
        let start = demo.traj.start();
        let end = demo.traj.poses.last().unwrap();
        let length: f64 = demo
            .traj
            .poses
            .windows(2)
            .map(|w| w[0].distance_to(&w[1]))
            .sum();
        println!(
            "demo {i}: ({:.2}, {:.2}) -> ({:.2}, {:.2}), length {:.2} m",
            start.x, start.y, end.x, end.y, length
        );
    }

    let path = std::env::temp_dir().join("difftraj_demo_dataset.bin");
    dataset.save(&path)?;
    println!("saved to {}", path.display());
    Ok(())
}
