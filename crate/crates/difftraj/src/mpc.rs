//! Receding-horizon trajectory tracking: the data-generation MPC. Direct
//! single shooting over the control sequence, central-difference gradients,
//! and damped BFGS with a projected backtracking line search.

use crate::error::{Error, Result};
use crate::refpath::ReferencePath;
use crate::scene::ObstacleTrack;
use crate::vehicle::{kinematic_step, Control, VehicleParams, VehicleState};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// MPC weights and solver settings. Weight matrices are diagonal; the fields
/// hold their diagonals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon (steps).
    pub n_p: usize,
    /// Prediction interval (s).
    pub t_s: f64,
    /// Projection velocity for the reference schedule (m/s).
    pub v_ref: f64,
    /// Stage tracking weights on `[x, y, phi]`.
    pub q1: [f64; 3],
    /// Terminal tracking weights on `[x, y, phi]`.
    pub q2: [f64; 3],
    /// Control-rate weights on `[delta, a]`.
    pub r1: [f64; 2],
    /// Control-magnitude weights on `[delta, a]`.
    pub r2: [f64; 2],
    /// Dynamic-penalty coefficient.
    pub alpha: f64,
    /// Scene switch: 0 = static tracking cost, 1 = pure dynamic penalty.
    /// Intermediate values blend the two terms.
    pub gamma: f64,
    /// Convergence tolerance on the projected gradient norm.
    pub tol: f64,
    /// Iteration cap.
    pub max_iters: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            n_p: 20,
            t_s: 0.05,
            v_ref: 0.4,
            q1: [5.0, 5.0, 1.0],
            q2: [50.0, 50.0, 10.0],
            r1: [10.0, 10.0],
            r2: [1.0, 1.0],
            alpha: 0.5,
            gamma: 0.0,
            tol: 1e-6,
            max_iters: 200,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_p < 2 {
            return Err(Error::Config("prediction horizon must be >= 2".into()));
        }
        let weights = self
            .q1
            .iter()
            .chain(self.q2.iter())
            .chain(self.r1.iter())
            .chain(self.r2.iter());
        if weights.into_iter().any(|&w| w < 0.0) {
            return Err(Error::Config("weights must be nonnegative".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Arc-length targets `s_1..s_{n_p}`: advance by `dt * v_ref` per step from
/// `s_cur`, clamped at `total_length`.
pub fn project_schedule(s_cur: f64, v_ref: f64, dt: f64, n_p: usize, total_length: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_p);
    let mut s = s_cur;
    for _ in 0..n_p {
        s = (s + dt * v_ref).min(total_length);
        out.push(s);
    }
    out
}

/// Distance floor in the dynamic penalty; avoids blow-up when an obstacle
/// overlaps the predicted position.
const DYNAMIC_DIST_FLOOR: f64 = 1e-3;

/// Cost breakdown for one candidate control sequence.
#[derive(Debug, Clone, Copy)]
pub struct MpcCost {
    pub total: f64,
    pub tracking: f64,
    pub dynamic: f64,
}

fn rollout_states(
    state: &VehicleState,
    controls: &[Control],
    cfg: &MpcConfig,
    params: &VehicleParams,
) -> Vec<VehicleState> {
    let mut states = Vec::with_capacity(controls.len());
    let mut s = *state;
    for u in controls {
        s = kinematic_step(&s, u, cfg.t_s, params);
        states.push(s);
    }
    states
}

/// Evaluate the receding-horizon cost for a control sequence.
pub fn mpc_cost(
    state: &VehicleState,
    controls: &[Control],
    reference: &ReferencePath,
    schedule: &[f64],
    obstacles: &[ObstacleTrack],
    t_now: f64,
    cfg: &MpcConfig,
    params: &VehicleParams,
) -> MpcCost {
    let states = rollout_states(state, controls, cfg, params);
    let n_p = controls.len();

    let mut tracking = 0.0;
    if cfg.gamma < 1.0 {
        for (k, s) in states.iter().enumerate() {
            let (rx, ry, rphi) = reference.pose_at(schedule[k]);
            let ephi = crate::geom::angle_diff(s.phi, rphi);
            let q = if k + 1 == n_p { &cfg.q2 } else { &cfg.q1 };
            tracking += q[0] * (s.x - rx).powi(2) + q[1] * (s.y - ry).powi(2) + q[2] * ephi * ephi;
        }
        for k in 1..n_p {
            let dd = controls[k].delta - controls[k - 1].delta;
            let da = controls[k].a - controls[k - 1].a;
            tracking += cfg.r1[0] * dd * dd + cfg.r1[1] * da * da;
        }
        for u in controls {
            tracking += cfg.r2[0] * u.delta * u.delta + cfg.r2[1] * u.a * u.a;
        }
    }

    let mut dynamic = 0.0;
    if cfg.gamma > 0.0 && !obstacles.is_empty() {
        for (k, s) in states.iter().enumerate() {
            let t = t_now + (k + 1) as f64 * cfg.t_s;
            for ob in obstacles {
                let (ox, oy) = ob.position_at_time(t);
                let d = ((s.x - ox).powi(2) + (s.y - oy).powi(2))
                    .sqrt()
                    .max(DYNAMIC_DIST_FLOOR);
                dynamic += cfg.alpha / d;
            }
        }
    }

    MpcCost {
        total: cfg.gamma * dynamic + (1.0 - cfg.gamma) * tracking,
        tracking,
        dynamic,
    }
}

impl ObstacleTrack {
    /// Linearly interpolated position at an arbitrary time; clamped to the
    /// track's endpoints.
    pub fn position_at_time(&self, t: f64) -> (f64, f64) {
        let ft = (t / self.dt).max(0.0);
        let k = ft.floor() as usize;
        if k + 1 >= self.points.len() {
            return *self.points.last().unwrap();
        }
        let a = self.points[k];
        let b = self.points[k + 1];
        let w = ft - k as f64;
        (a.0 + w * (b.0 - a.0), a.1 + w * (b.1 - a.1))
    }
}

fn clamp_vec(x: &mut Array1<f64>, params: &VehicleParams) {
    let n = x.len() / 2;
    for k in 0..n {
        x[2 * k] = x[2 * k].clamp(-params.delta_max, params.delta_max);
        x[2 * k + 1] = x[2 * k + 1].clamp(-params.a_max, params.a_max);
    }
}

fn to_controls(x: &Array1<f64>) -> Vec<Control> {
    (0..x.len() / 2)
        .map(|k| Control::new(x[2 * k], x[2 * k + 1]))
        .collect()
}

/// Locally optimal control sequence for one MPC step.
///
/// `warm_start` carries the previous solution (shifted by the caller);
/// `t_now` anchors dynamic-obstacle prediction times. Returns
/// [`Error::SolverNotConverged`] with the best iterate when the projected
/// gradient norm stays above `cfg.tol` at the iteration cap.
pub fn solve_mpc_step(
    state: &VehicleState,
    reference: &ReferencePath,
    obstacles: &[ObstacleTrack],
    t_now: f64,
    cfg: &MpcConfig,
    params: &VehicleParams,
    warm_start: Option<&[Control]>,
) -> Result<Vec<Control>> {
    cfg.validate()?;
    let n = 2 * cfg.n_p;
    let s_cur = reference.project(state.x, state.y);
    let schedule = project_schedule(s_cur, cfg.v_ref, cfg.t_s, cfg.n_p, reference.total_length());

    let cost = |x: &Array1<f64>| -> f64 {
        mpc_cost(
            state,
            &to_controls(x),
            reference,
            &schedule,
            obstacles,
            t_now,
            cfg,
            params,
        )
        .total
    };

    let mut x = Array1::zeros(n);
    if let Some(ws) = warm_start {
        for (k, u) in ws.iter().take(cfg.n_p).enumerate() {
            x[2 * k] = u.delta;
            x[2 * k + 1] = u.a;
        }
    }
    clamp_vec(&mut x, params);

    let grad = |x: &Array1<f64>| -> Array1<f64> {
        let h = 1e-6;
        let mut g = Array1::zeros(n);
        let mut xp = x.clone();
        for i in 0..n {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = cost(&xp);
            xp[i] = xi - h;
            let fm = cost(&xp);
            xp[i] = xi;
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    };

    let mut f = cost(&x);
    let mut g = grad(&x);
    let mut h_inv = Array2::eye(n);
    let mut best = (f, x.clone());
    let mut pg_norm = f64::INFINITY;

    for _iter in 0..cfg.max_iters {
        // projected gradient residual
        let mut xg = &x - &g;
        clamp_vec(&mut xg, params);
        pg_norm = (&xg - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm <= cfg.tol {
            return Ok(to_controls(&x));
        }

        let mut dir = -h_inv.dot(&g);
        if dir.dot(&g) >= 0.0 {
            dir = -g.clone(); // fall back to steepest descent
        }

        // backtracking line search with projection onto the control box
        let mut step = 1.0;
        let mut improved = false;
        let mut x_new = x.clone();
        let mut f_new = f;
        for _ in 0..30 {
            let mut cand = &x + &(step * &dir);
            clamp_vec(&mut cand, params);
            let fc = cost(&cand);
            let delta: Array1<f64> = &cand - &x;
            if fc <= f + 1e-4 * g.dot(&delta) || fc < f - 1e-18 {
                x_new = cand;
                f_new = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break; // stalled
        }

        let g_new = grad(&x_new);
        // damped BFGS update on the inverse Hessian
        let s_vec: Array1<f64> = &x_new - &x;
        let y_vec: Array1<f64> = &g_new - &g;
        let sy = s_vec.dot(&y_vec);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = h_inv.dot(&y_vec);
            let yhy = y_vec.dot(&hy);
            // H += (sy + yHy) * rho^2 * s s^T - rho * (H y s^T + s y^T H)
            let c1 = (sy + yhy) * rho * rho;
            for i in 0..n {
                for j in 0..n {
                    h_inv[[i, j]] += c1 * s_vec[i] * s_vec[j]
                        - rho * (hy[i] * s_vec[j] + s_vec[i] * hy[j]);
                }
            }
        }

        x = x_new;
        f = f_new;
        g = g_new;
        if f < best.0 {
            best = (f, x.clone());
        }
    }

    if pg_norm <= cfg.tol * 10.0 || best.0 < 1e-12 {
        return Ok(to_controls(&best.1));
    }
    Err(Error::SolverNotConverged {
        best: best.1.to_vec(),
        residual: pg_norm,
        iterations: cfg.max_iters,
    })
}

/// Best-effort variant: on non-convergence, return the best iterate anyway.
pub fn solve_mpc_step_lenient(
    state: &VehicleState,
    reference: &ReferencePath,
    obstacles: &[ObstacleTrack],
    t_now: f64,
    cfg: &MpcConfig,
    params: &VehicleParams,
    warm_start: Option<&[Control]>,
) -> Vec<Control> {
    match solve_mpc_step(state, reference, obstacles, t_now, cfg, params, warm_start) {
        Ok(u) => u,
        Err(Error::SolverNotConverged { best, .. }) => (0..best.len() / 2)
            .map(|k| Control::new(best[2 * k], best[2 * k + 1]))
            .collect(),
        Err(_) => vec![Control::zero(); cfg.n_p],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refpath::ReferencePath;

    fn straight_ref() -> ReferencePath {
        ReferencePath::from_waypoints(&[(-1.0, 0.0), (5.0, 0.0)], 0.01).unwrap()
    }

    #[test]
    fn schedule_is_arithmetic_progression() {
        let s = project_schedule(0.0, 0.4, 0.1, 3, 100.0);
        assert_eq!(s.len(), 3);
        assert!((s[0] - 0.04).abs() < 1e-12);
        assert!((s[1] - 0.08).abs() < 1e-12);
        assert!((s[2] - 0.12).abs() < 1e-12);
    }

    #[test]
    fn schedule_clamps_at_path_end() {
        let s = project_schedule(2.0, 0.4, 0.1, 5, 2.0);
        assert!(s.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn schedule_advances_full_length() {
        let s = project_schedule(0.0, 1.0, 0.05, 20, 100.0);
        assert!((s.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn on_path_straight_reference_gives_zero_control() {
        let cfg = MpcConfig::default();
        let params = VehicleParams::default();
        let reference = straight_ref();
        let state = VehicleState::new(0.0, 0.0, 0.0, cfg.v_ref);
        let u = solve_mpc_step(&state, &reference, &[], 0.0, &cfg, &params, None).unwrap();
        let max = u
            .iter()
            .flat_map(|c| [c.delta.abs(), c.a.abs()])
            .fold(0.0f64, f64::max);
        assert!(max <= 1e-3, "controls not near zero: {max}");
    }

    #[test]
    fn gamma_one_ignores_tracking_weights() {
        let params = VehicleParams::default();
        let reference = straight_ref();
        let ob = ObstacleTrack {
            points: vec![(1.0, 0.05); 40],
            dt: 0.1,
        };
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.4);
        let mut cfg = MpcConfig {
            gamma: 1.0,
            ..MpcConfig::default()
        };
        let u1 = solve_mpc_step_lenient(&state, &reference, &[ob.clone()], 0.0, &cfg, &params, None);
        cfg.q1 = [999.0, 999.0, 999.0];
        let u2 = solve_mpc_step_lenient(&state, &reference, &[ob], 0.0, &cfg, &params, None);
        for (a, b) in u1.iter().zip(&u2) {
            assert_eq!(a.delta, b.delta);
            assert_eq!(a.a, b.a);
        }
    }

    #[test]
    fn obstacle_ahead_steers_away() {
        // Obstacle slightly left of the reference ahead of the vehicle with
        // gamma = 1: the first steering command must turn right (negative).
        // Oracle: brute-force grid search over a constant first control.
        let params = VehicleParams::default();
        let reference = straight_ref();
        let lateral = 0.05;
        let ob = ObstacleTrack {
            points: vec![(0.2, lateral); 40],
            dt: 0.1,
        };
        let cfg = MpcConfig {
            gamma: 1.0,
            max_iters: 400,
            ..MpcConfig::default()
        };
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.4);
        let u = solve_mpc_step_lenient(&state, &reference, &[ob.clone()], 0.0, &cfg, &params, None);

        // brute-force oracle over the first steering command
        let mut best = (f64::INFINITY, 0.0);
        let schedule = project_schedule(0.0, cfg.v_ref, cfg.t_s, cfg.n_p, reference.total_length());
        for i in -20..=20 {
            let delta = i as f64 / 20.0 * params.delta_max;
            let controls = vec![Control::new(delta, 0.0); cfg.n_p];
            let c = mpc_cost(
                &state, &controls, &reference, &schedule, &[ob.clone()], 0.0, &cfg, &params,
            );
            if c.total < best.0 {
                best = (c.total, delta);
            }
        }
        assert!(best.1 < 0.0, "oracle best steering should be negative");
        assert!(
            u[0].delta.signum() == best.1.signum(),
            "solver steering {} vs oracle {}",
            u[0].delta,
            best.1
        );
    }
}
