//! Test-time composition of independently trained denoisers.
//!
//! The composed noise prediction is
//!
//! `(nu_uncond - sum nu_i) * eps_uncond + sum nu_i * eps_i`
//!
//! evaluated in a fixed left-to-right member order. The unconditional term
//! comes from one designated member with its obstacle conditioning dropped.
//! Terms whose coefficient is exactly zero are skipped entirely, so a
//! single-member composition with `nu = nu_uncond = 1` evaluates its member
//! once per step and reproduces plain sampling bit for bit.

use crate::denoiser::{Conditioning, Denoiser, NormStats};
use crate::error::{Error, Result};
use crate::sample::{sample_batch, sample_one, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::traj::Trajectory;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// One model in a composition with its conditioning and guidance weight.
pub struct Member<D> {
    pub denoiser: D,
    pub cond: Conditioning,
    pub nu: f64,
}

/// A weighted combination of denoisers, itself a [`Denoiser`].
///
/// The `Conditioning` passed to [`Denoiser::epsilon`] is ignored; members
/// carry their own. Samplers still use it for endpoint inpainting, so
/// callers should pass the shared start/goal conditioning.
pub struct ComposedDenoiser<D> {
    pub members: Vec<Member<D>>,
    pub nu_uncond: f64,
    /// Index of the member supplying the unconditional prediction.
    pub uncond_index: usize,
}

fn schedules_equal(a: &NoiseSchedule, b: &NoiseSchedule) -> bool {
    a == b
}

fn norms_equal(a: &NormStats, b: &NormStats) -> bool {
    a.min
        .iter()
        .zip(b.min.iter())
        .chain(a.max.iter().zip(b.max.iter()))
        .all(|(x, y)| (x - y).abs() < 1e-9)
}

impl<D: Denoiser> ComposedDenoiser<D> {
    pub fn new(members: Vec<Member<D>>, nu_uncond: f64, uncond_index: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("composition needs at least one member"));
        }
        if uncond_index >= members.len() {
            return Err(Error::invalid("uncond_index out of range"));
        }
        let first = &members[0].denoiser;
        for m in &members[1..] {
            if m.denoiser.horizon() != first.horizon() {
                return Err(Error::ShapeMismatch {
                    expected: format!("horizon {}", first.horizon()),
                    got: format!("horizon {}", m.denoiser.horizon()),
                });
            }
            if !schedules_equal(m.denoiser.schedule(), first.schedule()) {
                return Err(Error::invalid("members must share the noise schedule"));
            }
            if !norms_equal(m.denoiser.norm(), first.norm()) {
                return Err(Error::invalid(
                    "members must share normalization; train them with the same bounds",
                ));
            }
        }
        Ok(ComposedDenoiser {
            members,
            nu_uncond,
            uncond_index,
        })
    }

    fn nu_sum(&self) -> f64 {
        self.members.iter().map(|m| m.nu).sum()
    }
}

impl<D: Denoiser> Denoiser for ComposedDenoiser<D> {
    fn epsilon(&self, tau_t: &Array2<f64>, t: usize, _cond: &Conditioning) -> Array2<f64> {
        let mut out = Array2::zeros(tau_t.raw_dim());
        let c_u = self.nu_uncond - self.nu_sum();
        if c_u != 0.0 {
            let m = &self.members[self.uncond_index];
            let uncond = Conditioning {
                use_obstacle: false,
                ..m.cond.clone()
            };
            out = out + m.denoiser.epsilon(tau_t, t, &uncond) * c_u;
        }
        for m in &self.members {
            if m.nu != 0.0 {
                out = out + m.denoiser.epsilon(tau_t, t, &m.cond) * m.nu;
            }
        }
        out
    }

    fn schedule(&self) -> &NoiseSchedule {
        self.members[0].denoiser.schedule()
    }

    fn horizon(&self) -> usize {
        self.members[0].denoiser.horizon()
    }

    fn norm(&self) -> &NormStats {
        self.members[0].denoiser.norm()
    }
}

/// Sample one trajectory from a composition, inpainting `cond` endpoints.
pub fn compose_sample<D: Denoiser>(
    composed: &ComposedDenoiser<D>,
    cond: &Conditioning,
    cfg: &SamplerConfig,
    dt: f64,
) -> Result<Trajectory> {
    sample_one(composed, cond, cfg, dt)
}

/// Batch variant of [`compose_sample`].
pub fn compose_sample_batch<D: Denoiser>(
    composed: &ComposedDenoiser<D>,
    cond: &Conditioning,
    n: usize,
    cfg: &SamplerConfig,
    dt: f64,
) -> Result<Vec<Trajectory>> {
    sample_batch(composed, cond, n, cfg, dt)
}

/// On-disk description of a composition, referencing model checkpoints by
/// path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionFile {
    pub nu_uncond: f64,
    /// Index into `members` of the unconditional source.
    pub uncond_source: usize,
    pub members: Vec<CompositionFileMember>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionFileMember {
    /// Checkpoint path, relative to the composition file.
    pub model: String,
    pub nu: f64,
    /// Condition this member on the scene's obstacle track.
    #[serde(default)]
    pub use_obstacle: bool,
}

impl CompositionFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::GaussianOracleDenoiser;
    use crate::sample::{sample_array, SampleMethod};

    fn oracle(mean: f64, s2: f64) -> GaussianOracleDenoiser {
        GaussianOracleDenoiser::isotropic(8, [mean; 4], s2, NoiseSchedule::standard())
    }

    fn cond0() -> Conditioning {
        Conditioning::endpoints([0.0; 4], [0.0; 4])
    }

    fn member(mean: f64, s2: f64, nu: f64) -> Member<GaussianOracleDenoiser> {
        Member {
            denoiser: oracle(mean, s2),
            cond: cond0(),
            nu,
        }
    }

    #[test]
    fn single_member_unit_weight_is_bit_identical_to_plain_sampling() {
        let composed = ComposedDenoiser::new(vec![member(0.4, 0.25, 1.0)], 1.0, 0).unwrap();
        let cfg = SamplerConfig {
            method: SampleMethod::Ddpm,
            seed: 123,
            ..SamplerConfig::default()
        };
        let a = sample_array(&composed, &cond0(), &cfg).unwrap();
        let b = sample_array(&oracle(0.4, 0.25), &cond0(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_variance_composition_is_a_gaussian_oracle() {
        // With equal member variances the composed prediction must equal the
        // oracle for N(c_u*mu_u + nu1*mu1 + nu2*mu2, s2) at every (tau, t).
        let s2 = 0.25;
        let (nu1, nu2, nu_u) = (0.8, 0.5, 1.0);
        let composed = ComposedDenoiser::new(
            vec![member(1.0, s2, nu1), member(-0.6, s2, nu2)],
            nu_u,
            0,
        )
        .unwrap();
        let c_u = nu_u - nu1 - nu2;
        let mean = c_u * 1.0 + nu1 * 1.0 + nu2 * (-0.6);
        let reference = oracle(mean, s2);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(6);
        for &t in &[1usize, 13, 50, 100] {
            let tau = crate::nn::randn2(&mut rng, 4, 8, 1.5);
            let got = composed.epsilon(&tau, t, &cond0());
            let want = reference.epsilon(&tau, t, &cond0());
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "t {t}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn unequal_variance_composition_matches_precision_weighted_oracle() {
        // General oracle: the composed epsilon equals the weighted sum of
        // per-member marginal scores, computed here from first principles.
        // Member 0 also supplies the unconditional term; the Gaussian
        // oracle ignores conditioning, so its stats serve both roles.
        let (mu0, s20, nu0) = (0.1, 0.25, 0.7);
        let (mu1, s21, nu1) = (-0.4, 0.49, 0.6);
        let nu_u = 1.0;
        let composed = ComposedDenoiser::new(
            vec![member(mu0, s20, nu0), member(mu1, s21, nu1)],
            nu_u,
            0,
        )
        .unwrap();
        let sched = NoiseSchedule::standard();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        for &t in &[5usize, 60, 100] {
            let ab = sched.alpha_bar[t];
            let tau = crate::nn::randn2(&mut rng, 4, 8, 1.0);
            let got = composed.epsilon(&tau, t, &cond0());
            let c_u = nu_u - nu0 - nu1;
            let eps_of = |mu: f64, s2: f64, x: f64| {
                (1.0 - ab).sqrt() * (x - ab.sqrt() * mu) / (ab * s2 + 1.0 - ab)
            };
            for (idx, (&x, &g)) in tau.iter().zip(got.iter()).enumerate() {
                let want = (c_u + nu0) * eps_of(mu0, s20, x) + nu1 * eps_of(mu1, s21, x);
                assert!((g - want).abs() < 1e-12, "t {t} elem {idx}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn member_order_is_irrelevant_up_to_roundoff() {
        let a = ComposedDenoiser::new(
            vec![member(1.0, 0.2, 0.8), member(-0.6, 0.3, 0.5)],
            1.0,
            0,
        )
        .unwrap();
        let b = ComposedDenoiser::new(
            vec![member(-0.6, 0.3, 0.5), member(1.0, 0.2, 0.8)],
            1.0,
            1,
        )
        .unwrap();
        let tau = Array2::from_elem((4, 8), 0.37);
        let ea = a.epsilon(&tau, 42, &cond0());
        let eb = b.epsilon(&tau, 42, &cond0());
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_homogeneous_in_the_weights() {
        let tau = Array2::from_elem((4, 8), -0.21);
        let base = ComposedDenoiser::new(
            vec![member(1.0, 0.2, 0.8), member(-0.6, 0.3, 0.5)],
            1.0,
            0,
        )
        .unwrap();
        let scaled = ComposedDenoiser::new(
            vec![member(1.0, 0.2, 2.4), member(-0.6, 0.3, 1.5)],
            3.0,
            0,
        )
        .unwrap();
        let ea = base.epsilon(&tau, 30, &cond0());
        let eb = scaled.epsilon(&tau, 30, &cond0());
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficient_members_are_never_evaluated() {
        use crate::denoiser::CountingDenoiser;
        let counted = CountingDenoiser::new(oracle(0.5, 0.2));
        let silent = CountingDenoiser::new(oracle(-0.5, 0.2));
        let composed = ComposedDenoiser::new(
            vec![
                Member {
                    denoiser: &counted as &dyn Denoiser,
                    cond: cond0(),
                    nu: 1.0,
                },
                Member {
                    denoiser: &silent as &dyn Denoiser,
                    cond: cond0(),
                    nu: 0.0,
                },
            ],
            1.0,
            0,
        )
        .unwrap();
        let tau = Array2::zeros((4, 8));
        let _ = composed.epsilon(&tau, 10, &cond0());
        // nu_uncond - sum(nu) = 0, so the unconditional branch is skipped
        // too: exactly one evaluation total.
        assert_eq!(counted.calls(), 1);
        assert_eq!(silent.calls(), 0);
    }

    #[test]
    fn constructor_rejects_mismatched_members() {
        assert!(ComposedDenoiser::<GaussianOracleDenoiser>::new(vec![], 1.0, 0).is_err());
        assert!(ComposedDenoiser::new(vec![member(0.0, 0.1, 1.0)], 1.0, 5).is_err());
        let short = Member {
            denoiser: GaussianOracleDenoiser::isotropic(
                4,
                [0.0; 4],
                0.1,
                NoiseSchedule::standard(),
            ),
            cond: cond0(),
            nu: 1.0,
        };
        assert!(ComposedDenoiser::new(vec![member(0.0, 0.1, 1.0), short], 1.0, 0).is_err());
    }
}
