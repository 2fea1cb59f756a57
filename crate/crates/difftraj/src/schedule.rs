//! Variance schedule for the forward noising process.
//!
//! Indexing convention: `beta[t - 1]` is the variance added at step `t` for
//! `t in 1..=T`, while `alpha_bar` has length `T + 1` with `alpha_bar[0] = 1`
//! so that `alpha_bar[t]` is the total signal fraction after `t` steps.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Precomputed schedule tables shared by training and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Cumulative products, length `t_max + 1`, `alpha_bar[0] = 1`.
    pub alpha_bar: Vec<f64>,
    /// Posterior variances `beta_tilde[t - 1]` for step `t`; zero at `t = 1`.
    pub beta_tilde: Vec<f64>,
}

/// Linear schedule from `beta_min` to `beta_max` over `t_max` steps.
pub fn make_schedule(t_max: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max) {
        return Err(Error::invalid("need 0 < beta_min <= beta_max < 1"));
    }
    let beta: Vec<f64> = (0..t_max)
        .map(|i| {
            if t_max == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (t_max - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    /// Rebuild the derived tables from a raw beta sequence; checkpoints
    /// persist only the betas, so this must be deterministic.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid("betas must lie in (0, 1)"));
        }
        let t_max = beta.len();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(t_max + 1);
        alpha_bar.push(1.0);
        for &a in &alpha {
            alpha_bar.push(alpha_bar.last().unwrap() * a);
        }
        let beta_tilde: Vec<f64> = (1..=t_max)
            .map(|t| beta[t - 1] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]))
            .collect();
        Ok(NoiseSchedule {
            t_max,
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
        })
    }
}

impl NoiseSchedule {
    /// Standard schedule used throughout: T = 100, beta linear 1e-4 to 2e-2.
    pub fn standard() -> Self {
        make_schedule(100, 1e-4, 2e-2).expect("valid constants")
    }

    /// `sqrt(alpha_bar[t])` and `sqrt(1 - alpha_bar[t])` for step `t`.
    pub fn mix_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar[t];
        (ab.sqrt(), (1.0 - ab).sqrt())
    }
}
