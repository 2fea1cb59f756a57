//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `DTCK`, version, network config, training `dt`, normalization
//! stats, the raw beta schedule, then every parameter tensor in the fixed
//! `UNet::params()` order as `ndim, dims..., f64 data`. Writing is
//! deterministic, so save/load/save round trips are byte-identical.

use crate::error::{Error, Result};
use crate::model::{LearnedDenoiser, UNet, UNetConfig};
use crate::denoiser::NormStats;
use crate::schedule::NoiseSchedule;
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DTCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(d: &LearnedDenoiser, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = d.net.cfg;
    for v in [cfg.channels as u32, cfg.horizon as u32, cfg.cond_dim as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&d.dt.to_le_bytes())?;
    for c in 0..4 {
        w.write_all(&d.norm.min[c].to_le_bytes())?;
        w.write_all(&d.norm.max[c].to_le_bytes())?;
    }
    w.write_all(&(d.schedule.t_max as u32).to_le_bytes())?;
    for &b in &d.schedule.beta {
        w.write_all(&b.to_le_bytes())?;
    }
    let params = d.net.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.v.ndim() as u32).to_le_bytes())?;
        for &dim in p.v.shape() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &x in p.v.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    r: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn take(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r.read_exact(buf).map_err(|_| {
            Error::format(self.offset, "unexpected end of checkpoint")
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<LearnedDenoiser> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        r: std::io::BufReader::new(file),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.take(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(0, "not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let cfg = UNetConfig {
        channels: r.u32()? as usize,
        horizon: r.u32()? as usize,
        cond_dim: r.u32()? as usize,
    };
    if cfg.channels == 0 || cfg.horizon == 0 || cfg.horizon % 4 != 0 || cfg.cond_dim == 0 {
        return Err(Error::format(8, "invalid network configuration"));
    }
    let dt = r.f64()?;
    let mut norm = NormStats::identity();
    for c in 0..4 {
        norm.min[c] = r.f64()?;
        norm.max[c] = r.f64()?;
    }
    let t_max = r.u32()? as usize;
    if t_max == 0 || t_max > 1_000_000 {
        return Err(Error::format(r.offset - 4, "invalid schedule length"));
    }
    let mut beta = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        beta.push(r.f64()?);
    }
    let schedule = NoiseSchedule::from_betas(beta)?;

    let mut net = UNet::new(&mut ChaCha8Rng::seed_from_u64(0), cfg);
    let n_tensors = r.u32()? as usize;
    {
        let mut params = net.params_mut();
        if n_tensors != params.len() {
            return Err(Error::format(
                r.offset - 4,
                format!("expected {} tensors, found {n_tensors}", params.len()),
            ));
        }
        for p in params.iter_mut() {
            let ndim = r.u32()? as usize;
            if ndim != p.v.ndim() {
                return Err(Error::format(r.offset - 4, "tensor rank mismatch"));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            if shape != p.v.shape() {
                return Err(Error::format(r.offset, "tensor shape mismatch"));
            }
            let mut data = Vec::with_capacity(shape.iter().product());
            for _ in 0..shape.iter().product::<usize>() {
                data.push(r.f64()?);
            }
            p.v = ArrayD::from_shape_vec(shape, data).expect("validated shape");
        }
    }
    Ok(LearnedDenoiser {
        net,
        schedule,
        norm,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Conditioning, Denoiser};
    use crate::nn::randn2;
    use crate::schedule::make_schedule;

    fn small_denoiser(seed: u64) -> LearnedDenoiser {
        let cfg = UNetConfig {
            channels: 6,
            horizon: 16,
            cond_dim: 12,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = UNet::new(&mut rng, cfg);
        LearnedDenoiser {
            net,
            schedule: make_schedule(20, 1e-4, 2e-2).unwrap(),
            norm: NormStats::from_bounds(0.0, 0.0, 6.0, 6.0).unwrap(),
            dt: 0.1,
        }
    }

    #[test]
    fn round_trip_is_byte_identical_and_functionally_equal() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let d = small_denoiser(3);
        save_checkpoint(&d, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        for (a, b) in d.net.params().iter().zip(loaded.net.params().iter()) {
            assert_eq!(a.v, b.v);
        }
        assert_eq!(d.schedule, loaded.schedule);
        // Identical predictions on a random input.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tau = randn2(&mut rng, 4, 16, 1.0);
        let cond = Conditioning::endpoints([0.1, 0.1, 0.0, 1.0], [5.0, 5.0, 0.0, 1.0]);
        assert_eq!(d.epsilon(&tau, 7, &cond), loaded.epsilon(&tau, 7, &cond));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let d = small_denoiser(9);
        save_checkpoint(&d, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&p),
            Err(Error::Format { offset: 0, .. })
        ));

        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&p) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
