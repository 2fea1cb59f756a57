//! Trajectory tracking: execute a planned trajectory on the kinematic
//! bicycle with either a pure-pursuit controller or the MPC solver, and
//! report the time-aligned tracking error.

use crate::geom::{wrap_angle, Pose};
use crate::mpc::{solve_mpc_step_lenient, MpcConfig};
use crate::refpath::ReferencePath;
use crate::traj::Trajectory;
use crate::vehicle::{kinematic_step, Control, VehicleParams, VehicleState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    /// Minimum pure-pursuit lookahead distance.
    pub lookahead_min: f64,
    /// Speed-proportional lookahead gain (seconds).
    pub lookahead_gain: f64,
    /// Controller tick; must divide the trajectory interval.
    pub control_dt: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            lookahead_min: 0.3,
            lookahead_gain: 0.5,
            control_dt: 0.05,
        }
    }
}

/// Execution record aligned with the reference trajectory's time base.
#[derive(Debug, Clone)]
pub struct TrackResult {
    /// Executed pose at each reference index (same `dt` as the reference).
    pub executed: Trajectory,
    /// Mean time-aligned position error (M.TE).
    pub tracking_error: f64,
    pub final_state: VehicleState,
}

fn ticks_per_step(traj_dt: f64, control_dt: f64) -> usize {
    ((traj_dt / control_dt).round() as usize).max(1)
}

fn time_aligned_error(executed: &[Pose], reference: &Trajectory) -> f64 {
    let n = executed.len().min(reference.poses.len());
    let sum: f64 = (0..n)
        .map(|i| executed[i].distance_to(&reference.poses[i]))
        .sum();
    sum / n as f64
}

/// Reference speed for the segment containing time `t`, from implicit
/// differentiation of the waypoint spacing. Padded tails command zero.
fn reference_speed(traj: &Trajectory, t: f64) -> f64 {
    let i = ((t / traj.dt).floor() as usize).min(traj.poses.len().saturating_sub(2));
    traj.poses[i].distance_to(&traj.poses[i + 1]) / traj.dt
}

/// Track with pure pursuit: steer toward a lookahead point on the planned
/// path, command the reference speed through a bounded acceleration.
pub fn pure_pursuit_track(
    traj: &Trajectory,
    params: &VehicleParams,
    cfg: &TrackConfig,
) -> TrackResult {
    let start = traj.start();
    let mut state = VehicleState::new(start.x, start.y, start.yaw(), 0.0);
    let positions = traj.positions();
    let ticks = ticks_per_step(traj.dt, cfg.control_dt);
    let mut executed = vec![Pose::from_xy_yaw(state.x, state.y, state.phi).expect("finite")];

    for step in 0..traj.poses.len() - 1 {
        for sub in 0..ticks {
            let t = (step * ticks + sub) as f64 * cfg.control_dt;
            let v_des = reference_speed(traj, t).min(params.v_max);
            // Lookahead target: walk forward from the nearest path point.
            let nearest = positions
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1 .0 - state.x).powi(2) + (a.1 .1 - state.y).powi(2);
                    let db = (b.1 .0 - state.x).powi(2) + (b.1 .1 - state.y).powi(2);
                    da.partial_cmp(&db).expect("finite")
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            let l_d = cfg.lookahead_min.max(cfg.lookahead_gain * state.v);
            let mut target = positions[nearest];
            let mut acc = 0.0;
            for w in positions[nearest..].windows(2) {
                acc += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
                target = w[1];
                if acc >= l_d {
                    break;
                }
            }
            let alpha = wrap_angle((target.1 - state.y).atan2(target.0 - state.x) - state.phi);
            let dist = ((target.0 - state.x).powi(2) + (target.1 - state.y).powi(2))
                .sqrt()
                .max(1e-6);
            let delta = (2.0 * params.wheelbase * alpha.sin() / dist).atan();
            let a = (v_des - state.v) / cfg.control_dt;
            let u = params.clamp_control(Control::new(delta, a));
            state = kinematic_step(&state, &u, cfg.control_dt, params);
        }
        executed.push(Pose::from_xy_yaw(state.x, state.y, state.phi).expect("finite"));
    }

    let tracking_error = time_aligned_error(&executed, traj);
    TrackResult {
        executed: Trajectory::new(executed, traj.dt).expect("non-empty"),
        tracking_error,
        final_state: state,
    }
}

/// Track with the MPC solver, treating the planned trajectory as the
/// reference path.
pub fn mpc_track(
    traj: &Trajectory,
    params: &VehicleParams,
    mpc: &MpcConfig,
) -> crate::Result<TrackResult> {
    // Deduplicate padded tails; the reference path needs motion.
    let mut way: Vec<(f64, f64)> = Vec::new();
    for (x, y) in traj.positions() {
        if way
            .last()
            .map(|&(px, py): &(f64, f64)| ((px - x).powi(2) + (py - y).powi(2)).sqrt() > 1e-9)
            .unwrap_or(true)
        {
            way.push((x, y));
        }
    }
    let start = traj.start();
    let mut state = VehicleState::new(start.x, start.y, start.yaw(), 0.0);
    if way.len() < 2 {
        // Stationary plan: nothing to track.
        let executed = vec![*start; traj.poses.len()];
        return Ok(TrackResult {
            executed: Trajectory::new(executed, traj.dt)?,
            tracking_error: 0.0,
            final_state: state,
        });
    }
    let reference = ReferencePath::from_waypoints(&way, 0.01)?;
    let ticks = ticks_per_step(traj.dt, mpc.t_s);
    let mut executed = vec![*start];
    let mut warm: Option<Vec<Control>> = None;

    for step in 0..traj.poses.len() - 1 {
        for sub in 0..ticks {
            let t = (step * ticks + sub) as f64 * mpc.t_s;
            let u = solve_mpc_step_lenient(&state, &reference, &[], t, mpc, params, warm.as_deref());
            state = kinematic_step(&state, &u[0], mpc.t_s, params);
            let mut shifted = u[1..].to_vec();
            shifted.push(*u.last().expect("n_p > 0"));
            warm = Some(shifted);
        }
        executed.push(Pose::from_xy_yaw(state.x, state.y, state.phi)?);
    }

    let tracking_error = time_aligned_error(&executed, traj);
    Ok(TrackResult {
        executed: Trajectory::new(executed, traj.dt)?,
        tracking_error,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, spacing: f64) -> Trajectory {
        let poses = (0..n)
            .map(|i| Pose::from_xy_yaw(i as f64 * spacing, 0.0, 0.0).unwrap())
            .collect();
        Trajectory::new(poses, 0.1).unwrap()
    }

    #[test]
    fn pure_pursuit_follows_a_straight_line() {
        let traj = straight(60, 0.04); // 0.4 m/s
        let params = VehicleParams::default();
        let res = pure_pursuit_track(&traj, &params, &TrackConfig::default());
        for p in &res.executed.poses {
            assert!(p.y.abs() < 0.01, "lateral error {}", p.y);
        }
        assert!(res.tracking_error < 0.08, "M.TE {}", res.tracking_error);
        // The vehicle actually progressed most of the way.
        assert!(res.final_state.x > 1.8, "final x {}", res.final_state.x);
    }

    #[test]
    fn stationary_plan_keeps_the_vehicle_still() {
        let poses = vec![Pose::from_xy_yaw(1.0, 2.0, 0.5).unwrap(); 30];
        let traj = Trajectory::new(poses, 0.1).unwrap();
        let params = VehicleParams::default();
        let res = pure_pursuit_track(&traj, &params, &TrackConfig::default());
        assert!(res.final_state.x - 1.0 < 1e-9);
        assert!(res.tracking_error < 1e-9);
    }

    #[test]
    fn pure_pursuit_handles_padded_tail() {
        let traj = straight(30, 0.04).pad_or_truncate(60);
        let params = VehicleParams::default();
        let res = pure_pursuit_track(&traj, &params, &TrackConfig::default());
        // Goal is at x = 29 * 0.04 = 1.16; the vehicle should stop nearby.
        assert!((res.final_state.x - 1.16).abs() < 0.25, "x {}", res.final_state.x);
        assert!(res.final_state.v.abs() < 0.2);
    }

    #[test]
    fn pure_pursuit_tracks_a_gentle_arc() {
        let (kappa, v, dt) = (0.5, 0.4, 0.1);
        let poses: Vec<Pose> = (0..80)
            .map(|i| {
                let phi = kappa * v * dt * i as f64;
                Pose::from_xy_yaw(phi.sin() / kappa, (1.0 - phi.cos()) / kappa, phi).unwrap()
            })
            .collect();
        let traj = Trajectory::new(poses, dt).unwrap();
        let params = VehicleParams::default();
        let res = pure_pursuit_track(&traj, &params, &TrackConfig::default());
        assert!(res.tracking_error < 0.12, "M.TE {}", res.tracking_error);
    }

    #[test]
    fn mpc_tracking_follows_a_straight_line() {
        let traj = straight(40, 0.04);
        let params = VehicleParams::default();
        let mpc = MpcConfig {
            v_ref: 0.4,
            ..MpcConfig::default()
        };
        let res = mpc_track(&traj, &params, &mpc).unwrap();
        for p in &res.executed.poses {
            assert!(p.y.abs() < 0.02, "lateral error {}", p.y);
        }
        // MPC tracks the path spatially, so the acceleration transient leaves
        // a longitudinal lag in the time-aligned metric.
        assert!(res.tracking_error < 0.3, "M.TE {}", res.tracking_error);
        assert!(res.final_state.x > 1.2, "final x {}", res.final_state.x);
    }
}
