//! Render the toy scenes with a demonstration trajectory overlay as SVG
//! files in the system temp directory.
//!
//! Run with: `cargo run --example plot_scene`

use difftraj::datagen::{build_dataset, sample_starts, DatagenConfig};
use difftraj::mpc::MpcConfig;
use difftraj::plot::{scene_svg, velocity_svg, write_svg, PlotSeries, PALETTE};
use difftraj::scenes;
use difftraj::vehicle::VehicleParams;

fn main() -> difftraj::Result<()> {
    let scene = scenes::toy_composed();
    let goal = scenes::toy_goal();
    let params = VehicleParams::default();
    let cfg = DatagenConfig::default();
    let mpc = MpcConfig {
        v_ref: 0.5,
        gamma: 0.5,
        ..MpcConfig::default()
    };

    let starts = sample_starts(&scene, &goal, 2, 3, &params, &cfg, Some(5.5));
    let (dataset, _) = build_dataset(&scene, &starts, &goal, &mpc, &params, &cfg);
    println!("rendering {} demonstrations", dataset.demos.len());

    let series: Vec<PlotSeries> = dataset
        .demos
        .iter()
        .enumerate()
        .map(|(i, demo)| PlotSeries {
            traj: &demo.traj,
            label: format!("demo {i}"),
            color: PALETTE[i % PALETTE.len()],
        })
        .collect();

    let dir = std::env::temp_dir();
    let scene_path = dir.join("difftraj_scene.svg");
    let vel_path = dir.join("difftraj_velocity.svg");
    write_svg(&scene_svg(&scene, &series), &scene_path)?;
    write_svg(&velocity_svg(&series), &vel_path)?;
    println!("wrote {}", scene_path.display());
    println!("wrote {}", vel_path.display());
    Ok(())
}
