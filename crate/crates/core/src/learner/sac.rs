//! Soft actor-critic with a squashed-Gaussian policy, twin critics and
//! automatic entropy tuning.
//!
//! All gradients are exact reverse-mode derivatives assembled by hand over
//! the fixed computation structure (see `mlp`); the loss functions are pure
//! given the sampled noise, which is what makes the finite-difference
//! checks in the test-suite possible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Adam, ForwardCache, Mlp, MlpGrads, ScalarAdam};
use super::replay::{ReplayBuffer, Transition};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct SacConfig<F> {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: F,
    /// Soft-update rate for the target critics.
    pub tau: F,
    pub lr: F,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Entropy target; defaults to -act_dim.
    pub target_entropy: F,
    pub init_alpha: F,
    pub log_std_min: F,
    pub log_std_max: F,
}

impl<F: Real> SacConfig<F> {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden: vec![64, 64],
            gamma: F::c(0.99),
            tau: F::c(0.005),
            lr: F::c(3e-4),
            batch_size: 256,
            buffer_capacity: 100_000,
            target_entropy: -F::from_usize(act_dim).expect("act_dim fits scalar"),
            init_alpha: F::one(),
            log_std_min: F::c(-20.0),
            log_std_max: F::c(2.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateStats<F> {
    pub critic_loss: F,
    pub policy_loss: F,
    pub alpha_loss: F,
    pub alpha: F,
}

/// One reparameterized draw from the squashed Gaussian policy, with the
/// intermediates needed to assemble gradients.
pub struct PolicySample<F> {
    pub action: Vec<F>,
    pub log_prob: F,
    pub mean: Vec<F>,
    /// Clamped log standard deviations.
    pub log_std: Vec<F>,
    eps: Vec<F>,
    /// False where the raw log_std hit the clamp (gradient blocked).
    in_range: Vec<bool>,
    cache: ForwardCache<F>,
}

fn ln_cosh<F: Real>(x: F) -> F {
    let ax = x.abs();
    ax + (-(ax + ax)).exp().ln_1p() - F::c(std::f64::consts::LN_2)
}

const HALF_LN_2PI: f64 = 0.9189385332046727; // ln(2*pi)/2

#[derive(Debug, Clone)]
pub struct Sac<F> {
    pub cfg: SacConfig<F>,
    /// obs -> [mean; raw log_std].
    pub policy: Mlp<F>,
    pub q1: Mlp<F>,
    pub q2: Mlp<F>,
    pub q1_target: Mlp<F>,
    pub q2_target: Mlp<F>,
    pub opt_policy: Adam<F>,
    pub opt_q1: Adam<F>,
    pub opt_q2: Adam<F>,
    pub log_alpha: F,
    pub opt_alpha: ScalarAdam<F>,
    pub rng: ChaCha20Rng,
    pub updates: u64,
}

impl<F: Real> Sac<F> {
    pub fn new(cfg: SacConfig<F>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut policy_sizes = vec![cfg.obs_dim];
        policy_sizes.extend_from_slice(&cfg.hidden);
        policy_sizes.push(2 * cfg.act_dim);
        let mut q_sizes = vec![cfg.obs_dim + cfg.act_dim];
        q_sizes.extend_from_slice(&cfg.hidden);
        q_sizes.push(1);

        let policy = Mlp::new(&policy_sizes, &mut rng);
        let q1 = Mlp::new(&q_sizes, &mut rng);
        let q2 = Mlp::new(&q_sizes, &mut rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let lr = cfg.lr;
        let log_alpha = cfg.init_alpha.ln();
        Self {
            opt_policy: Adam::new(&policy, lr),
            opt_q1: Adam::new(&q1, lr),
            opt_q2: Adam::new(&q2, lr),
            opt_alpha: ScalarAdam::new(lr),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            rng,
            updates: 0,
            cfg,
        }
    }

    pub fn alpha(&self) -> F {
        self.log_alpha.exp()
    }

    fn draw_noise(&mut self, n: usize) -> Vec<F> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                F::c(z)
            })
            .collect()
    }

    /// Reparameterized draw with the given standard-normal noise. Pure.
    pub fn policy_sample(&self, obs: &[F], eps: &[F]) -> PolicySample<F> {
        assert_eq!(eps.len(), self.cfg.act_dim);
        let cache = self.policy.forward_cached(obs);
        let out = cache.output();
        let act = self.cfg.act_dim;
        let mean = out[..act].to_vec();
        let mut log_std = Vec::with_capacity(act);
        let mut in_range = Vec::with_capacity(act);
        for &raw in &out[act..2 * act] {
            let clamped = raw.max(self.cfg.log_std_min).min(self.cfg.log_std_max);
            in_range.push(raw > self.cfg.log_std_min && raw < self.cfg.log_std_max);
            log_std.push(clamped);
        }
        let mut action = Vec::with_capacity(act);
        let mut log_prob = F::zero();
        for i in 0..act {
            let ui = mean[i] + log_std[i].exp() * eps[i];
            action.push(ui.tanh());
            // log N(u; m, s) - log(1 - tanh(u)^2), the latter as -2 ln cosh(u).
            log_prob += -F::c(HALF_LN_2PI) - log_std[i] - F::c(0.5) * eps[i] * eps[i]
                + F::c(2.0) * ln_cosh(ui);
        }
        PolicySample { action, log_prob, mean, log_std, eps: eps.to_vec(), in_range, cache }
    }

    /// Stochastic (tanh of a Gaussian draw) or deterministic (tanh of the
    /// mean) action for the given observation.
    pub fn select_action(&mut self, obs: &[F], deterministic: bool) -> Vec<F> {
        if deterministic {
            let out = self.policy.forward(obs);
            out[..self.cfg.act_dim].iter().map(|m| m.tanh()).collect()
        } else {
            let eps = self.draw_noise(self.cfg.act_dim);
            self.policy_sample(obs, &eps).action
        }
    }

    fn q_input(obs: &[F], action: &[F]) -> Vec<F> {
        let mut x = Vec::with_capacity(obs.len() + action.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(action);
        x
    }

    /// Squared-error critic loss against the entropy-regularized bootstrap
    /// target, plus gradients for both critics. Pure given the noise.
    pub fn critic_loss_grads(
        &self,
        batch: &[Transition<F>],
        next_noise: &[Vec<F>],
    ) -> (F, MlpGrads<F>, MlpGrads<F>) {
        assert_eq!(batch.len(), next_noise.len());
        let b = F::from_usize(batch.len()).expect("batch fits scalar");
        let alpha = self.alpha();
        let mut loss = F::zero();
        let mut g1 = MlpGrads::zeros_like(&self.q1);
        let mut g2 = MlpGrads::zeros_like(&self.q2);
        for (t, eps) in batch.iter().zip(next_noise) {
            // Target value from the frozen target critics.
            let next = self.policy_sample(&t.next_obs, eps);
            let xq_next = Self::q_input(&t.next_obs, &next.action);
            let q1n = self.q1_target.forward(&xq_next)[0];
            let q2n = self.q2_target.forward(&xq_next)[0];
            let not_done = if t.done { F::zero() } else { F::one() };
            let y = t.reward
                + self.cfg.gamma * not_done * (q1n.min(q2n) - alpha * next.log_prob);

            let xq = Self::q_input(&t.obs, &t.action);
            for (net, grads) in [(&self.q1, &mut g1), (&self.q2, &mut g2)] {
                let cache = net.forward_cached(&xq);
                let q = cache.output()[0];
                let err = q - y;
                loss += err * err / b;
                let (g, _) = net.backward(&cache, &[F::c(2.0) * err / b]);
                grads.add(&g);
            }
        }
        (loss, g1, g2)
    }

    /// Policy loss `mean(alpha * log pi - min(q1, q2))` under reparameterized
    /// actions, with gradients for the policy only (critics held fixed, but
    /// their input gradients flow into the action). Also returns the mean
    /// log-probability for the temperature update. Pure given the noise.
    pub fn policy_loss_grads(
        &self,
        batch: &[Transition<F>],
        noise: &[Vec<F>],
    ) -> (F, MlpGrads<F>, F) {
        assert_eq!(batch.len(), noise.len());
        let b = F::from_usize(batch.len()).expect("batch fits scalar");
        let alpha = self.alpha();
        let act = self.cfg.act_dim;
        let mut loss = F::zero();
        let mut mean_logp = F::zero();
        let mut grads = MlpGrads::zeros_like(&self.policy);
        for (t, eps) in batch.iter().zip(noise) {
            let sample = self.policy_sample(&t.obs, eps);
            let xq = Self::q_input(&t.obs, &sample.action);
            let c1 = self.q1.forward_cached(&xq);
            let c2 = self.q2.forward_cached(&xq);
            let (q1, q2) = (c1.output()[0], c2.output()[0]);
            let qmin = q1.min(q2);
            loss += (alpha * sample.log_prob - qmin) / b;
            mean_logp += sample.log_prob / b;

            // d loss / d action through the minimizing critic's input.
            let (net, cache) = if q1 <= q2 { (&self.q1, &c1) } else { (&self.q2, &c2) };
            let (_, dx) = net.backward(cache, &[-F::one() / b]);
            let d_action = &dx[t.obs.len()..];

            // Map to gradients on the policy head [mean; raw log_std].
            let mut d_out = vec![F::zero(); 2 * act];
            for i in 0..act {
                let tanh_u = sample.action[i];
                let dsquash = F::one() - tanh_u * tanh_u;
                let du_dls = sample.log_std[i].exp() * sample.eps[i];
                // d logp / du = 2 tanh(u); direct d logp / d log_std = -1.
                let dlogp_du = F::c(2.0) * tanh_u;
                let g_mean = alpha / b * dlogp_du + d_action[i] * dsquash;
                let g_ls = alpha / b * (-F::one() + dlogp_du * du_dls)
                    + d_action[i] * dsquash * du_dls;
                d_out[i] = g_mean;
                d_out[act + i] = if sample.in_range[i] { g_ls } else { F::zero() };
            }
            let (g, _) = self.policy.backward(&sample.cache, &d_out);
            grads.add(&g);
        }
        (loss, grads, mean_logp)
    }

    /// Temperature loss `-log_alpha * (mean log pi + target entropy)` and its
    /// derivative with respect to `log_alpha`.
    pub fn alpha_loss_grad(&self, mean_logp: F) -> (F, F) {
        let drive = mean_logp + self.cfg.target_entropy;
        (-self.log_alpha * drive, -drive)
    }

    /// One full SAC update from the buffer: critics, policy, temperature,
    /// and a soft target sync.
    pub fn sac_update(&mut self, buffer: &ReplayBuffer<F>) -> UpdateStats<F> {
        let idx = buffer.sample_indices(&mut self.rng, self.cfg.batch_size);
        let batch: Vec<Transition<F>> = idx.iter().map(|&i| buffer.get(i).clone()).collect();

        let next_noise: Vec<Vec<F>> =
            (0..batch.len()).map(|_| self.draw_noise(self.cfg.act_dim)).collect();
        let (critic_loss, g1, g2) = self.critic_loss_grads(&batch, &next_noise);
        self.opt_q1.step(&mut self.q1, &g1);
        self.opt_q2.step(&mut self.q2, &g2);

        let noise: Vec<Vec<F>> =
            (0..batch.len()).map(|_| self.draw_noise(self.cfg.act_dim)).collect();
        let (policy_loss, gp, mean_logp) = self.policy_loss_grads(&batch, &noise);
        self.opt_policy.step(&mut self.policy, &gp);

        let (alpha_loss, galpha) = self.alpha_loss_grad(mean_logp);
        self.opt_alpha.step(&mut self.log_alpha, galpha);

        soft_update(&mut self.q1_target, &self.q1, self.cfg.tau);
        soft_update(&mut self.q2_target, &self.q2, self.cfg.tau);
        self.updates += 1;
        UpdateStats { critic_loss, policy_loss, alpha_loss, alpha: self.alpha() }
    }
}

/// `target = tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update<F: Real>(target: &mut Mlp<F>, online: &Mlp<F>, tau: F) {
    let blend = |t: &mut Vec<F>, o: &Vec<F>| {
        for (ti, oi) in t.iter_mut().zip(o) {
            *ti = tau * *oi + (F::one() - tau) * *ti;
        }
    };
    for (t, o) in target.w.iter_mut().zip(&online.w) {
        blend(t, o);
    }
    for (t, o) in target.b.iter_mut().zip(&online.b) {
        blend(t, o);
    }
}

/// Fills a buffer with bandit transitions and runs SAC updates; used by the
/// 1-step bandit sanity check (reward `-(a - a_star)^2`, single state).
pub fn train_bandit<F: Real>(a_star: F, updates: usize, seed: u64) -> Sac<F> {
    let mut cfg = SacConfig::<F>::new(1, 1);
    cfg.hidden = vec![32, 32];
    cfg.lr = F::c(8e-3);
    cfg.batch_size = 64;
    cfg.buffer_capacity = 4096;
    let mut sac = Sac::new(cfg, seed);
    let mut buffer = ReplayBuffer::new(sac.cfg.buffer_capacity);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let prefill = 512;
    for _ in 0..prefill {
        let a = F::c(rng.random_range(-1.0..1.0));
        let d = a - a_star;
        buffer.push(Transition {
            obs: vec![F::zero()],
            action: vec![a],
            reward: -d * d,
            next_obs: vec![F::zero()],
            done: true,
        });
    }
    for _ in 0..updates {
        // Keep exploring with the current policy while updating.
        let a = sac.select_action(&[F::zero()], false)[0];
        let d = a - a_star;
        buffer.push(Transition {
            obs: vec![F::zero()],
            action: vec![a],
            reward: -d * d,
            next_obs: vec![F::zero()],
            done: true,
        });
        sac.sac_update(&buffer);
    }
    sac
}
