//! Denoiser training: noise-prediction regression over a demonstration
//! dataset with classifier-free conditioning dropout.

use crate::datagen::Dataset;
use crate::denoiser::{q_sample, NormStats};
use crate::error::{Error, Result};
use crate::model::{LearnedDenoiser, UNet, UNetConfig};
use crate::nn::{randn2, Adam, Ema};
use crate::schedule::make_schedule;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub net: UNetConfig,
    pub t_max: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub ema_decay: f64,
    /// Probability of dropping obstacle conditioning for a sample.
    pub p_uncond: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: UNetConfig::default(),
            t_max: 100,
            beta_min: 1e-4,
            beta_max: 2e-2,
            steps: 1500,
            batch: 16,
            lr: 1e-3,
            grad_clip: 1.0,
            ema_decay: 0.99,
            p_uncond: 0.1,
            seed: 0,
        }
    }
}

/// Per-step mean losses, for logging and regression tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub n_params: usize,
}

/// Fit per-channel statistics for training data. Quaternion channels keep
/// the identity map; they are already bounded and the conditioning path
/// passes them through unnormalized.
pub fn fit_norm_stats<'a, I: IntoIterator<Item = &'a Array2<f64>>>(arrays: I) -> Result<NormStats> {
    let mut stats = NormStats::fit(arrays)?;
    stats.min[2] = -1.0;
    stats.max[2] = 1.0;
    stats.min[3] = -1.0;
    stats.max[3] = 1.0;
    Ok(stats)
}

struct Sample {
    tau0: Array2<f64>,
    start: [f64; 4],
    goal: [f64; 4],
    obstacle: Option<Array2<f64>>,
}

fn prepare(dataset: &Dataset, norm: &NormStats) -> Vec<Sample> {
    dataset
        .demos
        .iter()
        .map(|d| {
            let tau0 = norm.normalize(&d.traj.to_array());
            let col = |j: usize| [tau0[[0, j]], tau0[[1, j]], tau0[[2, j]], tau0[[3, j]]];
            let obstacle = d.obstacle_track.as_ref().map(|track| {
                let mut pts = Array2::zeros((2, track.points.len()));
                for (j, &(x, y)) in track.points.iter().enumerate() {
                    let (nx, ny) = norm.normalize_point(x, y);
                    pts[[0, j]] = nx;
                    pts[[1, j]] = ny;
                }
                pts
            });
            Sample {
                start: col(0),
                goal: col(tau0.ncols() - 1),
                tau0,
                obstacle,
            }
        })
        .collect()
}

/// Train a denoiser on `dataset`. Deterministic for a fixed config: the same
/// seed yields bit-identical weights.
///
/// `norm_override` fixes the normalization instead of fitting it to the
/// data. Models that will be composed must share normalization, so callers
/// typically derive it from the scene bounds.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    norm_override: Option<NormStats>,
) -> Result<(LearnedDenoiser, TrainReport)> {
    if dataset.demos.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if dataset.horizon != cfg.net.horizon {
        return Err(Error::ShapeMismatch {
            expected: format!("horizon {}", cfg.net.horizon),
            got: format!("horizon {}", dataset.horizon),
        });
    }
    let schedule = make_schedule(cfg.t_max, cfg.beta_min, cfg.beta_max)?;
    let norm = match norm_override {
        Some(n) => n,
        None => {
            let arrays: Vec<Array2<f64>> =
                dataset.demos.iter().map(|d| d.traj.to_array()).collect();
            fit_norm_stats(arrays.iter())?
        }
    };
    let samples = prepare(dataset, &norm);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = UNet::new(&mut rng, cfg.net);
    let n_params = net.n_params();
    let mut opt = Adam::new(cfg.lr, cfg.grad_clip);
    let mut ema = Ema::new(cfg.ema_decay, &net.params());
    let l = cfg.net.horizon;
    let denom = (4 * l * cfg.batch) as f64;

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut loss = 0.0;
        for _ in 0..cfg.batch {
            let s = &samples[rng.gen_range(0..samples.len())];
            let t = rng.gen_range(1..=cfg.t_max);
            let eps = randn2(&mut rng, 4, l, 1.0);
            let tau_t = q_sample(&schedule, &s.tau0, t, &eps);
            let drop: f64 = rng.gen();
            let obs = if drop < cfg.p_uncond {
                None
            } else {
                s.obstacle.as_ref()
            };
            let cc = net.embed(t, &s.start, &s.goal, obs);
            let (y, cache) = net.forward(&tau_t, cc);
            let diff = &y - &eps;
            loss += diff.mapv(|v| v * v).sum() / denom;
            let d_out = diff.mapv(|v| 2.0 * v / denom);
            net.backward(&cache, &d_out);
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        losses.push(loss);
        // Cosine decay from the base rate to a tenth of it.
        let frac = step as f64 / cfg.steps.max(1) as f64;
        opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * frac).cos()));
        opt.step(&mut net.params_mut());
        ema.update(&net.params());
    }
    ema.copy_to(&mut net.params_mut());

    Ok((
        LearnedDenoiser {
            net,
            schedule,
            norm,
            dt: dataset.dt,
        },
        TrainReport { losses, n_params },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Demonstration;
    use crate::geom::Pose;
    use crate::scene::ObstacleTrack;
    use crate::traj::Trajectory;

    fn tiny_cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            net: UNetConfig {
                channels: 6,
                horizon: 16,
                cond_dim: 12,
            },
            t_max: 20,
            steps,
            batch: 4,
            lr: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_dataset() -> Dataset {
        let mut demos = Vec::new();
        for k in 0..4 {
            let poses: Vec<Pose> = (0..16)
                .map(|i| {
                    Pose::from_xy_yaw(0.1 * i as f64, 0.2 * k as f64, 0.1 * k as f64).unwrap()
                })
                .collect();
            let traj = Trajectory::new(poses, 0.1).unwrap();
            let track = (k % 2 == 0).then(|| ObstacleTrack {
                points: (0..16).map(|i| (1.0 - 0.05 * i as f64, 0.5)).collect(),
                dt: 0.1,
            });
            demos.push(Demonstration {
                traj,
                obstacle_track: track,
            });
        }
        Dataset {
            demos,
            dt: 0.1,
            horizon: 16,
            map_id: "tiny".into(),
            scene_hash: 0,
        }
    }

    #[test]
    fn initial_loss_is_unit_noise_variance() {
        // The output conv starts at zero, so the first-step prediction is 0
        // and the per-element loss estimates E[eps^2] = 1.
        let ds = tiny_dataset();
        let (_, report) = train(&ds, &tiny_cfg(10), None).unwrap();
        let early: f64 = report.losses[..5].iter().sum::<f64>() / 5.0;
        assert!((early - 1.0).abs() < 0.15, "early loss {early}");
    }

    #[test]
    fn loss_decreases_with_training() {
        let ds = tiny_dataset();
        let (_, report) = train(&ds, &tiny_cfg(500), None).unwrap();
        let head: f64 = report.losses[..30].iter().sum::<f64>() / 30.0;
        let tail: f64 = report.losses[470..].iter().sum::<f64>() / 30.0;
        assert!(tail < 0.8 * head, "head {head} tail {tail}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset();
        let (a, ra) = train(&ds, &tiny_cfg(20), None).unwrap();
        let (b, rb) = train(&ds, &tiny_cfg(20), None).unwrap();
        assert_eq!(ra.losses, rb.losses);
        for (pa, pb) in a.net.params().iter().zip(b.net.params().iter()) {
            assert_eq!(pa.v, pb.v);
        }
        assert_eq!(a.norm, b.norm);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = tiny_dataset();
        let cfg = TrainConfig {
            lr: 1e150,
            steps: 20,
            grad_clip: 0.0,
            ..tiny_cfg(20)
        };
        match train(&ds, &cfg, None) {
            Err(Error::TrainingDiverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_horizon_mismatch_and_empty_data() {
        let ds = tiny_dataset();
        let mut cfg = tiny_cfg(1);
        cfg.net.horizon = 32;
        assert!(matches!(train(&ds, &cfg, None), Err(Error::ShapeMismatch { .. })));
        let empty = Dataset {
            demos: vec![],
            ..tiny_dataset()
        };
        assert!(train(&empty, &tiny_cfg(1), None).is_err());
    }
}
