//! Conditional temporal UNet noise predictor.
//!
//! The network maps a normalized `[4, L]` trajectory array and a conditioning
//! vector to a `[4, L]` noise estimate. Conditioning combines a sinusoidal
//! step embedding, the start/goal poses, and an optional obstacle-track
//! encoder with a learned null token for the classifier-free branch.
//!
//! Layout (channel count `C` constant throughout, `L` divisible by 4):
//! `conv_in -> res -> pool -> res -> pool -> res -> up+skip -> res ->
//! up+skip -> res -> silu -> conv_out`, with the output convolution
//! zero-initialized so training starts from the zero predictor.

use crate::denoiser::{Conditioning, Denoiser, NormStats};
use crate::nn::{
    avg_pool2, avg_pool2_backward, silu, silu_backward, sinusoidal_embedding, upsample2,
    upsample2_backward, Conv1d, Linear, Param,
};
use crate::schedule::NoiseSchedule;
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

const TIME_DIM: usize = 32;
const OBS_HIDDEN: usize = 32;
/// Fixed positional channels appended to the input: convolutions are
/// translation-equivariant, but trajectory structure (arrival, stationary
/// tail) depends on the column index, so the network needs to see it.
const POS_CHANNELS: usize = 3;

/// Network hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Feature channels in every block.
    pub channels: usize,
    /// Trajectory horizon; must be divisible by 4.
    pub horizon: usize,
    /// Conditioning vector width.
    pub cond_dim: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            channels: 32,
            horizon: crate::traj::DEFAULT_HORIZON,
            cond_dim: 64,
        }
    }
}

/// Residual block: `x + conv2(silu(conv1(x) + proj(cond)))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResBlock {
    conv1: Conv1d,
    conv2: Conv1d,
    cond_proj: Linear,
}

struct ResCache {
    cols1: Array2<f64>,
    /// Pre-activation after the conditioning bias.
    h: Array2<f64>,
    cols2: Array2<f64>,
}

impl ResBlock {
    fn new<R: Rng>(rng: &mut R, c: usize, cond_dim: usize) -> Self {
        ResBlock {
            conv1: Conv1d::new(rng, c, c, 5),
            conv2: Conv1d::new(rng, c, c, 5),
            cond_proj: Linear::new(rng, cond_dim, c),
        }
    }

    fn forward(&self, x: &Array2<f64>, cond: &Array1<f64>) -> (Array2<f64>, ResCache) {
        let (mut h, cols1) = self.conv1.forward(x);
        let bias = self.cond_proj.forward(cond);
        for (mut row, &b) in h.axis_iter_mut(Axis(0)).zip(bias.iter()) {
            row += b;
        }
        let a = silu(&h);
        let (y, cols2) = self.conv2.forward(&a);
        (x + &y, ResCache { cols1, h, cols2 })
    }

    /// Returns `(d_x, d_cond)` and accumulates parameter gradients.
    fn backward(
        &mut self,
        cache: &ResCache,
        cond: &Array1<f64>,
        d_y: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        let d_a = self.conv2.backward(&cache.cols2, d_y);
        let d_h = silu_backward(&cache.h, &d_a);
        let d_bias = d_h.sum_axis(Axis(1));
        let d_cond = self.cond_proj.backward(cond, &d_bias);
        let d_x = self.conv1.backward(&cache.cols1, &d_h);
        (d_x + d_y, d_cond)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.conv1.params().into();
        v.extend(self.conv2.params());
        v.extend(self.cond_proj.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.conv1.params_mut().into();
        v.extend(self.conv2.params_mut());
        v.extend(self.cond_proj.params_mut());
        v
    }
}

/// The noise-prediction network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UNet {
    pub cfg: UNetConfig,
    conv_in: Conv1d,
    enc1: ResBlock,
    enc2: ResBlock,
    mid: ResBlock,
    fuse2: Conv1d,
    dec2: ResBlock,
    fuse1: Conv1d,
    dec1: ResBlock,
    conv_out: Conv1d,
    time1: Linear,
    time2: Linear,
    ep1: Linear,
    ep2: Linear,
    obs_point: Linear,
    obs_out: Linear,
    null_obs: Param,
}

/// Everything needed to run the backward pass for one sample.
pub struct ForwardCache {
    cond: CondCache,
    cols_in: Array2<f64>,
    c_e1: ResCache,
    c_e2: ResCache,
    c_m: ResCache,
    cols_f2: Array2<f64>,
    c_d2: ResCache,
    cols_f1: Array2<f64>,
    c_d1: ResCache,
    /// Pre-activation input of the output convolution's SiLU.
    d1_out: Array2<f64>,
    cols_out: Array2<f64>,
}

/// Conditioning intermediates shared by forward and backward.
pub struct CondCache {
    e_sin: Array1<f64>,
    h_t: Array1<f64>,
    a_t: Array1<f64>,
    ep8: Array1<f64>,
    h_e: Array1<f64>,
    a_e: Array1<f64>,
    /// `(points [2, L], pre-activation, activation, mean)` when an obstacle
    /// track conditions this sample.
    obs: Option<(Array2<f64>, Array2<f64>, Array2<f64>, Array1<f64>)>,
    pub vec: Array1<f64>,
}

impl UNet {
    pub fn new<R: Rng>(rng: &mut R, cfg: UNetConfig) -> Self {
        assert!(cfg.horizon % 4 == 0, "horizon must be divisible by 4");
        let c = cfg.channels;
        let e = cfg.cond_dim;
        UNet {
            cfg,
            conv_in: Conv1d::new(rng, 4 + POS_CHANNELS, c, 5),
            enc1: ResBlock::new(rng, c, e),
            enc2: ResBlock::new(rng, c, e),
            mid: ResBlock::new(rng, c, e),
            fuse2: Conv1d::new(rng, 2 * c, c, 5),
            dec2: ResBlock::new(rng, c, e),
            fuse1: Conv1d::new(rng, 2 * c, c, 5),
            dec1: ResBlock::new(rng, c, e),
            conv_out: Conv1d::zeros(c, 4, 5),
            time1: Linear::new(rng, TIME_DIM, e),
            time2: Linear::new(rng, e, e),
            ep1: Linear::new(rng, 8, e),
            ep2: Linear::new(rng, e, e),
            obs_point: Linear::new(rng, 2, OBS_HIDDEN),
            obs_out: Linear::new(rng, OBS_HIDDEN, e),
            null_obs: Param::from1(Array1::zeros(e)),
        }
    }

    /// Embed the diffusion step and conditioning into one vector.
    ///
    /// `start`/`goal` and obstacle points must already be in normalized
    /// coordinates; `use_obstacle = None` selects the learned null token.
    pub fn embed(
        &self,
        t: usize,
        start: &[f64; 4],
        goal: &[f64; 4],
        obstacle: Option<&Array2<f64>>,
    ) -> CondCache {
        let e_sin = sinusoidal_embedding(t, TIME_DIM);
        let h_t = self.time1.forward(&e_sin);
        let a_t = silu(&h_t);
        let te = self.time2.forward(&a_t);

        let ep8 = Array1::from_iter(start.iter().chain(goal.iter()).cloned());
        let h_e = self.ep1.forward(&ep8);
        let a_e = silu(&h_e);
        let ee = self.ep2.forward(&a_e);

        let (oe, obs) = match obstacle {
            Some(points) => {
                let h = self.obs_point.as_w().dot(points)
                    + &self
                        .obs_point
                        .b
                        .as1()
                        .view()
                        .insert_axis(Axis(1))
                        .to_owned();
                let a = silu(&h);
                let mean = a.mean_axis(Axis(1)).expect("non-empty track");
                let oe = self.obs_out.forward(&mean);
                (oe, Some((points.clone(), h, a, mean)))
            }
            None => (self.null_obs.as1().to_owned(), None),
        };

        let vec = te + ee + oe;
        CondCache {
            e_sin,
            h_t,
            a_t,
            ep8,
            h_e,
            a_e,
            obs,
            vec,
        }
    }

    /// Positional channels for horizon `l`: a linear ramp over [-1, 1] and
    /// one sin/cos pair across the horizon.
    fn positional(l: usize) -> Array2<f64> {
        Array2::from_shape_fn((POS_CHANNELS, l), |(c, j)| {
            let u = j as f64 / (l - 1) as f64;
            match c {
                0 => 2.0 * u - 1.0,
                1 => (std::f64::consts::PI * u).sin(),
                _ => (std::f64::consts::PI * u).cos(),
            }
        })
    }

    pub fn forward(&self, x: &Array2<f64>, cond: CondCache) -> (Array2<f64>, ForwardCache) {
        let cv = cond.vec.clone();
        let xin = concatenate![Axis(0), x.view(), Self::positional(x.ncols()).view()];
        let (x0, cols_in) = self.conv_in.forward(&xin);
        let (e1, c_e1) = self.enc1.forward(&x0, &cv);
        let p1 = avg_pool2(&e1);
        let (e2, c_e2) = self.enc2.forward(&p1, &cv);
        let p2 = avg_pool2(&e2);
        let (m, c_m) = self.mid.forward(&p2, &cv);
        let u2 = upsample2(&m);
        let cat2 = concatenate![Axis(0), u2, e2];
        let (f2, cols_f2) = self.fuse2.forward(&cat2);
        let (d2, c_d2) = self.dec2.forward(&f2, &cv);
        let u1 = upsample2(&d2);
        let cat1 = concatenate![Axis(0), u1, e1];
        let (f1, cols_f1) = self.fuse1.forward(&cat1);
        let (d1, c_d1) = self.dec1.forward(&f1, &cv);
        let pre = silu(&d1);
        let (out, cols_out) = self.conv_out.forward(&pre);
        (
            out,
            ForwardCache {
                cond,
                cols_in,
                c_e1,
                c_e2,
                c_m,
                cols_f2,
                c_d2,
                cols_f1,
                c_d1,
                d1_out: d1,
                cols_out,
            },
        )
    }

    /// Accumulate gradients for one sample given `d loss / d out`.
    pub fn backward(&mut self, cache: &ForwardCache, d_out: &Array2<f64>) {
        let c = self.cfg.channels;
        let cv = cache.cond.vec.clone();
        let mut d_cond: Array1<f64> = Array1::zeros(cv.len());

        let d_pre = self.conv_out.backward(&cache.cols_out, d_out);
        let d_d1 = silu_backward(&cache.d1_out, &d_pre);
        let (d_f1, dc) = self.dec1.backward(&cache.c_d1, &cv, &d_d1);
        d_cond += &dc;
        let d_cat1 = self.fuse1.backward(&cache.cols_f1, &d_f1);
        let d_u1 = d_cat1.slice(s![..c, ..]).to_owned();
        let d_e1_skip = d_cat1.slice(s![c.., ..]).to_owned();
        let d_d2 = upsample2_backward(&d_u1);
        let (d_f2, dc) = self.dec2.backward(&cache.c_d2, &cv, &d_d2);
        d_cond += &dc;
        let d_cat2 = self.fuse2.backward(&cache.cols_f2, &d_f2);
        let d_u2 = d_cat2.slice(s![..c, ..]).to_owned();
        let d_e2_skip = d_cat2.slice(s![c.., ..]).to_owned();
        let d_m = upsample2_backward(&d_u2);
        let (d_p2, dc) = self.mid.backward(&cache.c_m, &cv, &d_m);
        d_cond += &dc;
        let d_e2 = avg_pool2_backward(&d_p2) + &d_e2_skip;
        let (d_p1, dc) = self.enc2.backward(&cache.c_e2, &cv, &d_e2);
        d_cond += &dc;
        let d_e1 = avg_pool2_backward(&d_p1) + &d_e1_skip;
        let (d_x0, dc) = self.enc1.backward(&cache.c_e1, &cv, &d_e1);
        d_cond += &dc;
        let _ = self.conv_in.backward(&cache.cols_in, &d_x0);

        // Conditioning branches all receive the full cond gradient.
        let cc = &cache.cond;
        let d_a_t = self.time2.backward(&cc.a_t, &d_cond);
        let d_h_t = silu_backward(&cc.h_t, &d_a_t);
        let _ = self.time1.backward(&cc.e_sin, &d_h_t);

        let d_a_e = self.ep2.backward(&cc.a_e, &d_cond);
        let d_h_e = silu_backward(&cc.h_e, &d_a_e);
        let _ = self.ep1.backward(&cc.ep8, &d_h_e);

        match &cc.obs {
            Some((points, h, a, mean)) => {
                let d_mean = self.obs_out.backward(mean, &d_cond);
                let l = a.ncols() as f64;
                let d_a = Array2::from_shape_fn(a.dim(), |(i, _)| d_mean[i] / l);
                let d_h = silu_backward(h, &d_a);
                self.obs_point.w.g += &d_h.dot(&points.t()).into_dyn();
                self.obs_point.b.g += &d_h.sum_axis(Axis(1)).into_dyn();
            }
            None => {
                self.null_obs.g += &d_cond.into_dyn();
            }
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.conv_in.params().into();
        v.extend(self.enc1.params());
        v.extend(self.enc2.params());
        v.extend(self.mid.params());
        v.extend(self.fuse2.params());
        v.extend(self.dec2.params());
        v.extend(self.fuse1.params());
        v.extend(self.dec1.params());
        v.extend(self.conv_out.params());
        v.extend(self.time1.params());
        v.extend(self.time2.params());
        v.extend(self.ep1.params());
        v.extend(self.ep2.params());
        v.extend(self.obs_point.params());
        v.extend(self.obs_out.params());
        v.push(&self.null_obs);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.conv_in.params_mut().into();
        v.extend(self.enc1.params_mut());
        v.extend(self.enc2.params_mut());
        v.extend(self.mid.params_mut());
        v.extend(self.fuse2.params_mut());
        v.extend(self.dec2.params_mut());
        v.extend(self.fuse1.params_mut());
        v.extend(self.dec1.params_mut());
        v.extend(self.conv_out.params_mut());
        v.extend(self.time1.params_mut());
        v.extend(self.time2.params_mut());
        v.extend(self.ep1.params_mut());
        v.extend(self.ep2.params_mut());
        v.extend(self.obs_point.params_mut());
        v.extend(self.obs_out.params_mut());
        v.push(&mut self.null_obs);
        v
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.v.len()).sum()
    }
}

/// A trained noise predictor together with its schedule and data statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnedDenoiser {
    pub net: UNet,
    pub schedule: NoiseSchedule,
    pub norm: NormStats,
    /// Sampling interval the model was trained at.
    pub dt: f64,
}

impl LearnedDenoiser {
    /// Build the normalized conditioning arrays for one call.
    fn embed(&self, t: usize, cond: &Conditioning) -> CondCache {
        let np = |p: &[f64; 4]| {
            let (x, y) = self.norm.normalize_point(p[0], p[1]);
            [x, y, p[2], p[3]]
        };
        let obs_points = if cond.use_obstacle {
            cond.obstacle.as_ref().map(|track| {
                let mut pts = Array2::zeros((2, track.points.len()));
                for (j, &(x, y)) in track.points.iter().enumerate() {
                    let (nx, ny) = self.norm.normalize_point(x, y);
                    pts[[0, j]] = nx;
                    pts[[1, j]] = ny;
                }
                pts
            })
        } else {
            None
        };
        self.net
            .embed(t, &np(&cond.start), &np(&cond.goal), obs_points.as_ref())
    }
}

impl Denoiser for LearnedDenoiser {
    fn epsilon(&self, tau_t: &Array2<f64>, t: usize, cond: &Conditioning) -> Array2<f64> {
        let cc = self.embed(t, cond);
        self.net.forward(tau_t, cc).0
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn horizon(&self) -> usize {
        self.net.cfg.horizon
    }

    fn norm(&self) -> &NormStats {
        &self.norm
    }
}

impl Linear {
    /// Weight view for matrix-valued inputs.
    pub fn as_w(&self) -> ndarray::ArrayView2<'_, f64> {
        self.w.as2()
    }
}
