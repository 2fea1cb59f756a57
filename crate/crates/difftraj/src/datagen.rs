//! Expert-demonstration generation: closed-loop MPC rollouts over reference
//! paths, dataset assembly, and the binary dataset container.

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::mpc::{solve_mpc_step_lenient, MpcConfig};
use crate::refpath::{generate_reference_path, ReferencePath};
use crate::scene::{footprint_collides, point_to_footprint_distance, ObstacleTrack, SceneSpec};
use crate::traj::Trajectory;
use crate::vehicle::{kinematic_step, Control, VehicleParams, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// One expert trajectory, with the dynamic-obstacle track it was generated
/// against (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub traj: Trajectory,
    pub obstacle_track: Option<ObstacleTrack>,
}

/// A set of demonstrations sharing horizon and sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
    pub dt: f64,
    pub horizon: usize,
    pub map_id: String,
    pub scene_hash: u64,
}

/// Rollout settings for demonstration generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatagenConfig {
    /// Trajectory horizon L.
    pub horizon: usize,
    /// Recording interval (s); constant across a dataset.
    pub dt: f64,
    /// Goal position tolerance (m).
    pub eps_goal: f64,
    /// Goal speed tolerance (m/s).
    pub v_stop: f64,
    /// Control-tick cap per rollout.
    pub step_cap: usize,
    /// Grid inflation radius for reference planning (m).
    pub inflation: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            horizon: 128,
            dt: 0.1,
            eps_goal: 0.05,
            v_stop: 0.05,
            step_cap: 4000,
            inflation: 0.4,
        }
    }
}

/// Closed-loop MPC rollout from `start` to `goal`: at each control tick the
/// first control of the receding-horizon solution is applied for one
/// prediction interval; poses are recorded every `dt`. The recorded horizon
/// is padded with the final pose or truncated to exactly `horizon` entries.
pub fn rollout_demonstration(
    scene: &SceneSpec,
    start: &Pose,
    goal: &Pose,
    mpc_cfg: &MpcConfig,
    params: &VehicleParams,
    cfg: &DatagenConfig,
) -> Result<Demonstration> {
    let reference = generate_reference_path(&scene.grid, start, goal, cfg.inflation)?;
    rollout_on_reference(scene, &reference, start, goal, mpc_cfg, params, cfg)
}

fn rollout_on_reference(
    scene: &SceneSpec,
    reference: &ReferencePath,
    start: &Pose,
    goal: &Pose,
    mpc_cfg: &MpcConfig,
    params: &VehicleParams,
    cfg: &DatagenConfig,
) -> Result<Demonstration> {
    let dynamic = mpc_cfg.gamma > 0.0 && !scene.dynamic.is_empty();
    let track_len = cfg.step_cap + cfg.horizon;
    let obstacles: Vec<ObstacleTrack> = if dynamic {
        scene
            .dynamic
            .iter()
            .map(|d| d.sample_track(track_len, cfg.dt))
            .collect()
    } else {
        Vec::new()
    };

    let record_every = (cfg.dt / mpc_cfg.t_s).round().max(1.0) as usize;
    let mut state = VehicleState::new(start.x, start.y, start.yaw(), 0.0);
    let mut recorded = vec![*start];
    let mut warm: Option<Vec<Control>> = None;
    let mut reached = false;

    for tick in 0..cfg.step_cap {
        let t_now = tick as f64 * mpc_cfg.t_s;
        let controls = solve_mpc_step_lenient(
            &state,
            reference,
            &obstacles,
            t_now,
            mpc_cfg,
            params,
            warm.as_deref(),
        );
        state = kinematic_step(&state, &controls[0], mpc_cfg.t_s, params);
        // shift warm start by one step
        let mut next_warm = controls[1..].to_vec();
        next_warm.push(*controls.last().unwrap());
        warm = Some(next_warm);

        if (tick + 1) % record_every == 0 {
            recorded.push(Pose::from_xy_yaw(state.x, state.y, state.phi)?);
        }

        let dist_goal = ((state.x - goal.x).powi(2) + (state.y - goal.y).powi(2)).sqrt();
        if dist_goal <= cfg.eps_goal && state.v.abs() <= cfg.v_stop {
            reached = true;
            break;
        }
    }
    if !reached {
        return Err(Error::StepCapExceeded { cap: cfg.step_cap });
    }

    let traj = Trajectory::new(recorded, cfg.dt)?.pad_or_truncate(cfg.horizon);
    let obstacle_track = if dynamic {
        Some(scene.dynamic[0].sample_track(cfg.horizon, cfg.dt))
    } else {
        None
    };
    Ok(Demonstration {
        traj,
        obstacle_track,
    })
}

/// Per-start failure report from [`build_dataset`].
#[derive(Debug, Clone)]
pub struct FailureReport {
    pub start_index: usize,
    pub reason: String,
}

/// Generate one demonstration per start pose; failed rollouts and post hoc
/// invariant violations are excluded and reported. Rollouts run in parallel
/// across starts.
pub fn build_dataset(
    scene: &SceneSpec,
    starts: &[Pose],
    goal: &Pose,
    mpc_cfg: &MpcConfig,
    params: &VehicleParams,
    cfg: &DatagenConfig,
) -> (Dataset, Vec<FailureReport>) {
    let results: Vec<(usize, std::result::Result<Demonstration, String>)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| {
            let res = rollout_demonstration(scene, start, goal, mpc_cfg, params, cfg)
                .map_err(|e| e.to_string())
                .and_then(|demo| {
                    check_demo(&demo, scene, mpc_cfg, params, cfg).map(|_| demo)
                });
            (i, res)
        })
        .collect();

    let mut demos = Vec::new();
    let mut failures = Vec::new();
    for (i, res) in results {
        match res {
            Ok(d) => demos.push(d),
            Err(reason) => failures.push(FailureReport {
                start_index: i,
                reason,
            }),
        }
    }
    (
        Dataset {
            demos,
            dt: cfg.dt,
            horizon: cfg.horizon,
            map_id: scene.name.clone(),
            scene_hash: scene.hash(),
        },
        failures,
    )
}

/// Post hoc invariants on an emitted demonstration: static collision
/// freedom (static scenes only, matching the generation cost), dynamic
/// clearance at matching time indices, and the implicit-velocity bound.
fn check_demo(
    demo: &Demonstration,
    scene: &SceneSpec,
    mpc_cfg: &MpcConfig,
    params: &VehicleParams,
    cfg: &DatagenConfig,
) -> std::result::Result<(), String> {
    if mpc_cfg.gamma < 1.0 {
        for pose in &demo.traj.poses {
            if footprint_collides(&scene.grid, pose, params) {
                return Err("demonstration collides with static scene".into());
            }
        }
    }
    if let Some(track) = &demo.obstacle_track {
        for (k, pose) in demo.traj.poses.iter().enumerate() {
            let d =
                point_to_footprint_distance(track.at_index(k), pose, params.length, params.width);
            if d == 0.0 {
                return Err("demonstration collides with dynamic obstacle".into());
            }
        }
    }
    let max_spacing = params.v_max * cfg.dt + 1e-9;
    for w in demo.traj.poses.windows(2) {
        if w[0].distance_to(&w[1]) > max_spacing {
            return Err("adjacent-pose spacing exceeds v_max * dt".into());
        }
    }
    Ok(())
}

/// Uniformly sample start poses in the free space of the inflated grid,
/// headed along their reference path. Positions whose reference path exceeds
/// `max_path_len` (when set) are rejected so every demonstration fits the
/// horizon without truncation.
pub fn sample_starts(
    scene: &SceneSpec,
    goal: &Pose,
    n: usize,
    seed: u64,
    _params: &VehicleParams,
    cfg: &DatagenConfig,
    max_path_len: Option<f64>,
) -> Vec<Pose> {
    let inflated = scene.grid.inflate(cfg.inflation);
    let (x0, y0, x1, y1) = SceneSpec::new(inflated.clone(), vec![], "").bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < n * 200 {
        attempts += 1;
        let x = rng.gen_range(x0..x1);
        let y = rng.gen_range(y0..y1);
        if inflated.is_occupied_at(x, y) {
            continue;
        }
        let probe = Pose::from_xy_yaw(x, y, 0.0).unwrap();
        if probe.distance_to(goal) < 0.3 {
            continue;
        }
        let Ok(path) = generate_reference_path(&scene.grid, &probe, goal, cfg.inflation) else {
            continue;
        };
        if let Some(cap) = max_path_len {
            if path.total_length() > cap {
                continue;
            }
        }
        let (_, _, phi) = path.pose_at(0.0);
        out.push(Pose::from_xy_yaw(x, y, phi).unwrap());
    }
    out
}

const DATASET_MAGIC: &[u8; 4] = b"DTRJ";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.horizon as u32).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.demos.len() as u32).to_le_bytes())?;
        let id = self.map_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&self.scene_hash.to_le_bytes())?;
        for demo in &self.demos {
            let flags: u8 = demo.obstacle_track.is_some() as u8;
            w.write_all(&[flags])?;
            for p in &demo.traj.poses {
                for v in [p.x, p.y, p.q_z, p.q_w] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            if let Some(track) = &demo.obstacle_track {
                for &(x, y) in &track.points {
                    w.write_all(&x.to_le_bytes())?;
                    w.write_all(&y.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        struct Cursor<R> {
            r: R,
            offset: u64,
        }
        impl<R: Read> Cursor<R> {
            fn take(&mut self, buf: &mut [u8]) -> Result<()> {
                self.r
                    .read_exact(buf)
                    .map_err(|_| Error::format(self.offset, "unexpected end of file"))?;
                self.offset += buf.len() as u64;
                Ok(())
            }
        }
        let mut cur = Cursor {
            r: std::io::BufReader::new(std::fs::File::open(path)?),
            offset: 0,
        };
        let r = &mut cur;
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.take(&mut b4)?;
        if &b4 != DATASET_MAGIC {
            return Err(Error::format(0, "bad dataset magic"));
        }
        r.take(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DATASET_VERSION {
            return Err(Error::format(4, format!("unsupported dataset version {version}")));
        }
        r.take(&mut b4)?;
        let horizon = u32::from_le_bytes(b4) as usize;
        r.take(&mut b8)?;
        let dt = f64::from_le_bytes(b8);
        r.take(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.take(&mut b4)?;
        let id_len = u32::from_le_bytes(b4) as usize;
        let mut id = vec![0u8; id_len];
        r.take(&mut id)?;
        let map_id = String::from_utf8(id)
            .map_err(|_| Error::format(r.offset, "map id is not valid utf-8"))?;
        r.take(&mut b8)?;
        let scene_hash = u64::from_le_bytes(b8);

        let mut demos = Vec::with_capacity(n);
        for _ in 0..n {
            let mut flag = [0u8; 1];
            r.take(&mut flag)?;
            let mut poses = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let mut vals = [0.0f64; 4];
                for v in &mut vals {
                    r.take(&mut b8)?;
                    *v = f64::from_le_bytes(b8);
                }
                poses.push(Pose {
                    x: vals[0],
                    y: vals[1],
                    q_z: vals[2],
                    q_w: vals[3],
                });
            }
            let obstacle_track = if flag[0] & 1 != 0 {
                let mut points = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    r.take(&mut b8)?;
                    let x = f64::from_le_bytes(b8);
                    r.take(&mut b8)?;
                    let y = f64::from_le_bytes(b8);
                    points.push((x, y));
                }
                Some(ObstacleTrack { points, dt })
            } else {
                None
            };
            demos.push(Demonstration {
                traj: Trajectory { poses, dt },
                obstacle_track,
            });
        }
        Ok(Dataset {
            demos,
            dt,
            horizon,
            map_id,
            scene_hash,
        })
    }
}
