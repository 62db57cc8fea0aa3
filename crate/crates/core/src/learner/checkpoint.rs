//! Binary checkpoints for the SAC learner.
//!
//! The format is a fixed little-endian layout behind an eight-byte magic
//! ("VLSAC001"): config header, temperature, update counter, the five
//! networks (policy, twin critics, twin targets), the three Adam states,
//! the scalar Adam for the temperature, and the ChaCha RNG coordinates
//! (seed, stream, word position). Serialization is byte-stable: saving the
//! same learner twice yields identical files, and a reloaded learner
//! continues bit-identically (the replay buffer is intentionally not
//! persisted; resumed training refills it).

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::mlp::{Adam, Mlp, MlpGrads, ScalarAdam};
use super::sac::{Sac, SacConfig};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"VLSAC001";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint inconsistent: {0}")]
    Shape(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn blob<F: Real>(&mut self, values: &[Vec<F>]) {
        self.u64(values.iter().map(Vec::len).sum::<usize>() as u64);
        for layer in values {
            for &x in layer {
                self.f64(x.as_f64());
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a counted blob into layers shaped like `shape`.
    fn blob<F: Real>(&mut self, shape: &[Vec<F>]) -> Result<Vec<Vec<F>>, CheckpointError> {
        let expect: usize = shape.iter().map(Vec::len).sum();
        let n = self.u64()? as usize;
        if n != expect {
            return Err(CheckpointError::Shape(format!(
                "blob holds {n} values, layout needs {expect}"
            )));
        }
        let mut out = Vec::with_capacity(shape.len());
        for layer in shape {
            let mut l = Vec::with_capacity(layer.len());
            for _ in 0..layer.len() {
                l.push(F::c(self.f64()?));
            }
            out.push(l);
        }
        Ok(out)
    }
}

fn write_net<F: Real>(w: &mut Writer, net: &Mlp<F>) {
    w.blob(&net.w);
    w.blob(&net.b);
}

fn read_net<F: Real>(r: &mut Reader, like: &Mlp<F>) -> Result<Mlp<F>, CheckpointError> {
    Ok(Mlp { sizes: like.sizes.clone(), w: r.blob(&like.w)?, b: r.blob(&like.b)? })
}

fn write_adam<F: Real>(w: &mut Writer, opt: &Adam<F>) {
    w.u64(opt.t);
    w.blob(&opt.m.w);
    w.blob(&opt.m.b);
    w.blob(&opt.v.w);
    w.blob(&opt.v.b);
}

fn read_adam<F: Real>(
    r: &mut Reader,
    like: &Adam<F>,
) -> Result<(u64, MlpGrads<F>, MlpGrads<F>), CheckpointError> {
    let t = r.u64()?;
    let m = MlpGrads { w: r.blob(&like.m.w)?, b: r.blob(&like.m.b)? };
    let v = MlpGrads { w: r.blob(&like.v.w)?, b: r.blob(&like.v.b)? };
    Ok((t, m, v))
}

pub fn to_bytes<F: Real>(sac: &Sac<F>) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    let cfg = &sac.cfg;
    w.u64(cfg.obs_dim as u64);
    w.u64(cfg.act_dim as u64);
    w.u64(cfg.hidden.len() as u64);
    for &h in &cfg.hidden {
        w.u64(h as u64);
    }
    w.f64(cfg.gamma.as_f64());
    w.f64(cfg.tau.as_f64());
    w.f64(cfg.lr.as_f64());
    w.u64(cfg.batch_size as u64);
    w.u64(cfg.buffer_capacity as u64);
    w.f64(cfg.target_entropy.as_f64());
    w.f64(cfg.init_alpha.as_f64());
    w.f64(cfg.log_std_min.as_f64());
    w.f64(cfg.log_std_max.as_f64());

    w.f64(sac.log_alpha.as_f64());
    w.u64(sac.updates);

    for net in [&sac.policy, &sac.q1, &sac.q2, &sac.q1_target, &sac.q2_target] {
        write_net(&mut w, net);
    }
    for opt in [&sac.opt_policy, &sac.opt_q1, &sac.opt_q2] {
        write_adam(&mut w, opt);
    }
    w.u64(sac.opt_alpha.t);
    w.f64(sac.opt_alpha.m.as_f64());
    w.f64(sac.opt_alpha.v.as_f64());

    w.buf.extend_from_slice(&sac.rng.get_seed());
    w.u64(sac.rng.get_stream());
    let word_pos = sac.rng.get_word_pos();
    w.u64(word_pos as u64);
    w.u64((word_pos >> 64) as u64);
    w.buf
}

pub fn from_bytes<F: Real>(bytes: &[u8]) -> Result<Sac<F>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let obs_dim = r.u64()? as usize;
    let act_dim = r.u64()? as usize;
    let hidden_len = r.u64()? as usize;
    if hidden_len > 64 {
        return Err(CheckpointError::Shape(format!("{hidden_len} hidden layers")));
    }
    let mut hidden = Vec::with_capacity(hidden_len);
    for _ in 0..hidden_len {
        hidden.push(r.u64()? as usize);
    }
    let mut cfg = SacConfig::<F>::new(obs_dim, act_dim);
    cfg.hidden = hidden;
    cfg.gamma = F::c(r.f64()?);
    cfg.tau = F::c(r.f64()?);
    cfg.lr = F::c(r.f64()?);
    cfg.batch_size = r.u64()? as usize;
    cfg.buffer_capacity = r.u64()? as usize;
    cfg.target_entropy = F::c(r.f64()?);
    cfg.init_alpha = F::c(r.f64()?);
    cfg.log_std_min = F::c(r.f64()?);
    cfg.log_std_max = F::c(r.f64()?);

    // Build a learner with the right shapes, then overwrite all state.
    let mut sac = Sac::new(cfg, 0);
    sac.log_alpha = F::c(r.f64()?);
    sac.updates = r.u64()?;

    sac.policy = read_net(&mut r, &sac.policy)?;
    sac.q1 = read_net(&mut r, &sac.q1)?;
    sac.q2 = read_net(&mut r, &sac.q2)?;
    sac.q1_target = read_net(&mut r, &sac.q1_target)?;
    sac.q2_target = read_net(&mut r, &sac.q2_target)?;

    for opt in [&mut sac.opt_policy, &mut sac.opt_q1, &mut sac.opt_q2] {
        let shaped: &Adam<F> = opt;
        let (t, m, v) = read_adam(&mut r, shaped)?;
        opt.t = t;
        opt.m = m;
        opt.v = v;
    }
    sac.opt_alpha = ScalarAdam::new(sac.cfg.lr);
    sac.opt_alpha.t = r.u64()?;
    sac.opt_alpha.m = F::c(r.f64()?);
    sac.opt_alpha.v = F::c(r.f64()?);

    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = (r.u64()? as u128) | ((r.u64()? as u128) << 64);
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    sac.rng = rng;

    if r.pos != bytes.len() {
        return Err(CheckpointError::Shape(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(sac)
}

pub fn save<F: Real>(sac: &Sac<F>, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(sac))?;
    Ok(())
}

pub fn load<F: Real>(path: &Path) -> Result<Sac<F>, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::replay::{ReplayBuffer, Transition};
    use rand::Rng;

    fn sample_sac(seed: u64) -> Sac<f64> {
        let mut cfg = SacConfig::<f64>::new(4, 2);
        cfg.hidden = vec![8, 8];
        cfg.batch_size = 8;
        let mut sac = Sac::new(cfg, seed);
        // Push some history through the learner so every state field is
        // non-trivial before serialization.
        let mut buffer = ReplayBuffer::new(64);
        let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
        for _ in 0..32 {
            buffer.push(Transition {
                obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..2).map(|_| rng.random_range(-0.9..0.9)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: false,
            });
        }
        for _ in 0..3 {
            sac.sac_update(&buffer);
        }
        sac
    }

    #[test]
    fn roundtrip_is_byte_stable() {
        let sac = sample_sac(9);
        let bytes = to_bytes(&sac);
        assert_eq!(&bytes[..8], MAGIC);
        let restored: Sac<f64> = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&restored), bytes);
        assert_eq!(restored.updates, sac.updates);
        assert_eq!(restored.log_alpha, sac.log_alpha);
        assert_eq!(restored.policy, sac.policy);
        assert_eq!(restored.q1_target, sac.q1_target);
        assert_eq!(restored.opt_q1.t, sac.opt_q1.t);
        assert_eq!(restored.opt_q1.m, sac.opt_q1.m);
    }

    #[test]
    fn restored_learner_continues_bit_identically() {
        let mut original = sample_sac(10);
        let mut restored: Sac<f64> = from_bytes(&to_bytes(&original)).unwrap();
        // Same stochastic actions...
        let obs = vec![0.1, -0.2, 0.3, -0.4];
        for _ in 0..5 {
            assert_eq!(
                original.select_action(&obs, false),
                restored.select_action(&obs, false)
            );
        }
        // ...and same update arithmetic afterwards.
        let mut buffer = ReplayBuffer::new(64);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..16 {
            buffer.push(Transition {
                obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..2).map(|_| rng.random_range(-0.9..0.9)).collect(),
                reward: 0.5,
                next_obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: false,
            });
        }
        let a = original.sac_update(&buffer);
        let b = restored.sac_update(&buffer);
        assert_eq!(a.critic_loss, b.critic_loss);
        assert_eq!(a.policy_loss, b.policy_loss);
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(original.policy, restored.policy);
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let sac = sample_sac(11);
        save(&sac, &path).unwrap();
        let back: Sac<f64> = load(&path).unwrap();
        assert_eq!(to_bytes(&back), to_bytes(&sac));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let sac = sample_sac(12);
        let mut bytes = to_bytes(&sac);
        let err = from_bytes::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated(_)), "{err}");
        bytes[0] ^= 0xff;
        let err = from_bytes::<f64>(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic), "{err}");
    }

    #[test]
    fn rejects_trailing_garbage() {
        let sac = sample_sac(13);
        let mut bytes = to_bytes(&sac);
        bytes.push(0);
        let err = from_bytes::<f64>(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::Shape(_)), "{err}");
    }
}
