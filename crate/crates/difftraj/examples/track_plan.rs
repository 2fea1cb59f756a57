//! Track a planned trajectory with pure pursuit and with the MPC tracker,
//! comparing their time-aligned tracking errors.
//!
//! Run with: `cargo run --example track_plan`

use difftraj::geom::Pose;
use difftraj::mpc::MpcConfig;
use difftraj::track::{mpc_track, pure_pursuit_track, TrackConfig};
use difftraj::traj::Trajectory;
use difftraj::vehicle::VehicleParams;

fn main() -> difftraj::Result<()> {
    // A gentle constant-curvature arc at 0.4 m/s.
    let (kappa, v, dt) = (0.4, 0.4, 0.1);
    let poses: Vec<Pose> = (0..100)
        .map(|i| {
            let phi = kappa * v * dt * i as f64;
            Pose::from_xy_yaw(phi.sin() / kappa, (1.0 - phi.cos()) / kappa, phi).unwrap()
        })
        .collect::<Vec<_>>();
    let traj = Trajectory::new(poses, dt)?;
    let params = VehicleParams::default();

    let pp = pure_pursuit_track(&traj, &params, &TrackConfig::default());
    println!("pure pursuit: M.TE {:.3} m, final speed {:.2} m/s", pp.tracking_error, pp.final_state.v);

    let mpc = MpcConfig {
        v_ref: v,
        ..MpcConfig::default()
    };
    let res = mpc_track(&traj, &params, &mpc)?;
    println!("MPC tracker:  M.TE {:.3} m, final speed {:.2} m/s", res.tracking_error, res.final_state.v);
    Ok(())
}
