//! Minimal f64 neural-network layers with explicit forward/backward passes.
//!
//! Feature maps are `[C, L]` arrays processed one sample at a time; gradients
//! accumulate into each parameter until [`Adam::step`] consumes and clears
//! them. Convolutions use im2col so the inner loop is a single matmul.

use ndarray::{Array1, Array2, ArrayD, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub v: ArrayD<f64>,
    pub g: ArrayD<f64>,
    m1: ArrayD<f64>,
    m2: ArrayD<f64>,
}

impl Param {
    pub fn new(v: ArrayD<f64>) -> Self {
        let z = ArrayD::zeros(v.raw_dim());
        Param {
            g: z.clone(),
            m1: z.clone(),
            m2: z,
            v,
        }
    }

    pub fn from2(v: Array2<f64>) -> Self {
        Param::new(v.into_dyn())
    }

    pub fn from1(v: Array1<f64>) -> Self {
        Param::new(v.into_dyn())
    }

    pub fn as2(&self) -> ndarray::ArrayView2<'_, f64> {
        self.v.view().into_dimensionality().expect("rank 2")
    }

    pub fn as1(&self) -> ndarray::ArrayView1<'_, f64> {
        self.v.view().into_dimensionality().expect("rank 1")
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }
}

/// Standard-normal `[rows, cols]` matrix scaled by `scale`.
pub fn randn2<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// Adam with decoupled global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, clip: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            t: 0,
        }
    }

    /// Clip the global gradient norm, apply one update, and clear gradients.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        let norm_sq: f64 = params.iter().map(|p| p.g.mapv(|g| g * g).sum()).sum();
        let norm = norm_sq.sqrt();
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / norm
        } else {
            1.0
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            let g = p.g.mapv(|g| g * scale);
            p.m1.zip_mut_with(&g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            p.m2.zip_mut_with(&g, |m, &g| *m = self.beta2 * *m + (1.0 - self.beta2) * g * g);
            let (m1, m2, lr, eps) = (&p.m1, &p.m2, self.lr, self.eps);
            let mut update = m1.mapv(|m| m / bc1);
            update.zip_mut_with(m2, |u, &v| *u = lr * *u / ((v / bc2).sqrt() + eps));
            p.v -= &update;
            p.g.fill(0.0);
        }
    }
}

/// Exponential moving average of a parameter set, used at sampling time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ema {
    pub decay: f64,
    pub shadow: Vec<ArrayD<f64>>,
}

impl Ema {
    pub fn new(decay: f64, params: &[&Param]) -> Self {
        Ema {
            decay,
            shadow: params.iter().map(|p| p.v.clone()).collect(),
        }
    }

    pub fn update(&mut self, params: &[&Param]) {
        for (s, p) in self.shadow.iter_mut().zip(params) {
            s.zip_mut_with(&p.v, |s, &v| *s = self.decay * *s + (1.0 - self.decay) * v);
        }
    }

    pub fn copy_to(&self, params: &mut [&mut Param]) {
        for (p, s) in params.iter_mut().zip(&self.shadow) {
            p.v.assign(s);
        }
    }
}

/// 1D convolution with zero ("same") padding and odd kernel size.
///
/// Weights are stored pre-flattened as `[c_out, c_in * k]` so the forward
/// pass is `w . im2col(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub w: Param,
    pub b: Param,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(rng: &mut R, c_in: usize, c_out: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "same padding needs an odd kernel");
        let scale = (2.0 / (c_in * k) as f64).sqrt();
        Conv1d {
            w: Param::from2(randn2(rng, c_out, c_in * k, scale)),
            b: Param::from1(Array1::zeros(c_out)),
            c_in,
            c_out,
            k,
        }
    }

    /// Zero-initialized variant for output layers.
    pub fn zeros(c_in: usize, c_out: usize, k: usize) -> Self {
        assert!(k % 2 == 1);
        Conv1d {
            w: Param::from2(Array2::zeros((c_out, c_in * k))),
            b: Param::from1(Array1::zeros(c_out)),
            c_in,
            c_out,
            k,
        }
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let l = x.ncols();
        let half = (self.k / 2) as isize;
        let mut cols = Array2::zeros((self.c_in * self.k, l));
        for c in 0..self.c_in {
            for dk in 0..self.k {
                let row = c * self.k + dk;
                let off = dk as isize - half;
                for j in 0..l {
                    let src = j as isize + off;
                    if src >= 0 && (src as usize) < l {
                        cols[[row, j]] = x[[c, src as usize]];
                    }
                }
            }
        }
        cols
    }

    /// Returns the output and the im2col cache needed by `backward`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let cols = self.im2col(x);
        let mut y = self.w.as2().dot(&cols);
        let b = self.b.as1();
        for (mut row, &bi) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
            row += bi;
        }
        (y, cols)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cols: &Array2<f64>, d_y: &Array2<f64>) -> Array2<f64> {
        let dw = d_y.dot(&cols.t());
        self.w.g += &dw.into_dyn();
        self.b.g += &d_y.sum_axis(Axis(1)).into_dyn();
        let d_cols = self.w.as2().t().dot(d_y);
        // col2im: fold the padded patches back onto the input grid.
        let l = d_y.ncols();
        let half = (self.k / 2) as isize;
        let mut d_x = Array2::zeros((self.c_in, l));
        for c in 0..self.c_in {
            for dk in 0..self.k {
                let row = c * self.k + dk;
                let off = dk as isize - half;
                for j in 0..l {
                    let src = j as isize + off;
                    if src >= 0 && (src as usize) < l {
                        d_x[[c, src as usize]] += d_cols[[row, j]];
                    }
                }
            }
        }
        d_x
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Fully connected layer on column vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        let scale = (2.0 / d_in as f64).sqrt();
        Linear {
            w: Param::from2(randn2(rng, d_out, d_in, scale)),
            b: Param::from1(Array1::zeros(d_out)),
        }
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.as2().dot(x) + self.b.as1()
    }

    /// Accumulates gradients given the cached input; returns the input grad.
    pub fn backward(&mut self, x: &Array1<f64>, d_y: &Array1<f64>) -> Array1<f64> {
        let dw = d_y
            .view()
            .insert_axis(Axis(1))
            .dot(&x.view().insert_axis(Axis(0)));
        self.w.g += &dw.into_dyn();
        self.b.g += &d_y.clone().into_dyn();
        self.w.as2().t().dot(d_y)
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// `x * sigmoid(x)` elementwise.
pub fn silu<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| v / (1.0 + (-v).exp()))
}

/// Gradient of SiLU given the pre-activation input.
pub fn silu_backward<D: ndarray::Dimension>(
    x: &ndarray::Array<f64, D>,
    d_y: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut d_x = x.mapv(|v| {
        let s = 1.0 / (1.0 + (-v).exp());
        s * (1.0 + v * (1.0 - s))
    });
    d_x.zip_mut_with(d_y, |d, &g| *d *= g);
    d_x
}

/// Halve the length axis by averaging adjacent pairs; `L` must be even.
pub fn avg_pool2(x: &Array2<f64>) -> Array2<f64> {
    let (c, l) = x.dim();
    assert!(l % 2 == 0, "pool needs even length");
    Array2::from_shape_fn((c, l / 2), |(i, j)| 0.5 * (x[[i, 2 * j]] + x[[i, 2 * j + 1]]))
}

pub fn avg_pool2_backward(d_y: &Array2<f64>) -> Array2<f64> {
    let (c, l2) = d_y.dim();
    Array2::from_shape_fn((c, l2 * 2), |(i, j)| 0.5 * d_y[[i, j / 2]])
}

/// Double the length axis by nearest-neighbor repetition.
pub fn upsample2(x: &Array2<f64>) -> Array2<f64> {
    let (c, l) = x.dim();
    Array2::from_shape_fn((c, l * 2), |(i, j)| x[[i, j / 2]])
}

pub fn upsample2_backward(d_y: &Array2<f64>) -> Array2<f64> {
    let (c, l2) = d_y.dim();
    Array2::from_shape_fn((c, l2 / 2), |(i, j)| d_y[[i, 2 * j]] + d_y[[i, 2 * j + 1]])
}

/// Sinusoidal embedding of a scalar step index into `dim` features.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Array1<f64> {
    assert!(dim % 2 == 0);
    let half = dim / 2;
    Array1::from_shape_fn(dim, |i| {
        let freq = (10_000f64).powf(-((i % half) as f64) / half as f64);
        let arg = t as f64 * freq;
        if i < half {
            arg.sin()
        } else {
            arg.cos()
        }
    })
}
