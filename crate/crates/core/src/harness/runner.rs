//! Scenario execution: scripted rollouts, the training loop, and policy
//! evaluation.
//!
//! `run_scenario` is the one entry point the CLI needs. Scenarios map to
//! engines as follows:
//!
//! * `baseline` — scripted all-zero setpoints over `horizon` steps;
//! * `s1_static_attack` / `s2_timeseries_attack` — the square-wave attacker
//!   (`oscillating_action`) over `horizon` steps, differing only in the
//!   configured weather/load environment;
//! * `s3_learned_attack` — soft actor-critic training over `training.env_steps`
//!   environment steps followed by a deterministic-policy evaluation.
//!
//! Everything is seeded: environment randomness (episode day offsets) comes
//! from `seeds.run`, learner randomness (network init, exploration noise,
//! replay sampling, warmup actions) from `seeds.policy`. Two runs with equal
//! config produce byte-identical artifacts.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::config::{Scenario, ScenarioConfig};
use super::trace::{write_episode_log, write_summary, write_trace};
use super::world::{ScenarioData, StepRecord, World};
use super::HarnessError;
use crate::agents::oscillating_action;
use crate::learner::{save, ReplayBuffer, Sac, SacConfig, Transition};

/// Salt for the uniform-action warmup stream so it cannot collide with the
/// network-initialisation stream derived from the same seed.
const WARMUP_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Salt for evaluation-episode day offsets (distinct from training offsets).
const EVAL_SALT: u64 = 0x853c_49e6_748f_ea9b;
/// Salt for the random-policy reference evaluation.
const RANDOM_POLICY_SALT: u64 = 0xda3e_39cb_94b9_5bdb;

/// Fixed open-loop setpoint schedules.
#[derive(Debug, Clone, Copy)]
pub enum ScriptedPolicy {
    /// All relative setpoints zero (no attack).
    Zero,
    /// Synchronous square wave: +1 for `holdoff` steps, then -1, repeating.
    Oscillating { holdoff: u64 },
}

impl ScriptedPolicy {
    pub fn action(&self, step: u64, dim: usize) -> Vec<f64> {
        match *self {
            ScriptedPolicy::Zero => vec![0.0; dim],
            ScriptedPolicy::Oscillating { holdoff } => {
                oscillating_action::<f64>(step, holdoff, dim).0
            }
        }
    }
}

/// Aggregate figures for a finished run, serialised to `summary.toml`.
///
/// Single-rollout runs fill `divergence_step`/`period_peaks`; episodic runs
/// (training evaluation) fill the `episodes` group instead. If the initial
/// power flow already fails, the run has zero steps and `divergence_step`
/// is 0.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub steps: u64,
    pub converged_steps: u64,
    /// Steps whose converged solution leaves the voltage band.
    pub violation_steps: u64,
    /// Largest |v - 1| over all buses and converged steps.
    pub max_v_dev: f64,
    /// Mean reward/objective over all executed steps.
    pub mean_objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_step: Option<u64>,
    /// Peak |v - 1| per half-period window (`holdoff` steps each), converged
    /// steps only; stops at the first window without a converged step.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub period_peaks: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_episodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged_episodes: Option<u64>,
}

/// One row of `episodes.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub start: DateTime<Utc>,
    pub steps: u64,
    pub episode_return: f64,
    pub mean_objective: f64,
    pub violation_steps: u64,
    pub diverged: bool,
}

fn max_bus_dev(rec: &StepRecord) -> f64 {
    rec.v_mag.iter().fold(0.0, |m, v| m.max((v - 1.0).abs()))
}

fn summarize(scenario: &str, holdoff: u64, records: &[StepRecord]) -> RunSummary {
    let steps = records.len() as u64;
    let converged_steps = records.iter().filter(|r| r.converged).count() as u64;
    let violation_steps = records.iter().filter(|r| r.converged && r.violation).count() as u64;
    let max_v_dev = records
        .iter()
        .filter(|r| r.converged)
        .fold(0.0, |m: f64, r| m.max(max_bus_dev(r)));
    let mean_objective = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.objective).sum::<f64>() / steps as f64
    };
    let divergence_step = records.iter().find(|r| !r.converged).map(|r| r.step);

    let mut period_peaks = Vec::new();
    let windows = steps / holdoff;
    'windows: for w in 0..windows {
        let chunk = &records[(w * holdoff) as usize..((w + 1) * holdoff) as usize];
        let mut peak: Option<f64> = None;
        for r in chunk.iter().filter(|r| r.converged) {
            let d = max_bus_dev(r);
            peak = Some(peak.map_or(d, |p: f64| p.max(d)));
        }
        match peak {
            Some(p) => period_peaks.push(p),
            None => break 'windows,
        }
    }

    RunSummary {
        scenario: scenario.to_string(),
        steps,
        converged_steps,
        violation_steps,
        max_v_dev,
        mean_objective,
        divergence_step,
        period_peaks,
        episodes: None,
        violation_episodes: None,
        diverged_episodes: None,
    }
}

/// Runs a scripted policy for `cfg.horizon` steps (or until divergence when
/// `stop_on_divergence` is set) and summarises the result.
pub fn rollout(
    data: &ScenarioData,
    cfg: &ScenarioConfig,
    policy: ScriptedPolicy,
) -> (Vec<StepRecord>, RunSummary) {
    let mut world = World::new(data, cfg);
    let dim = world.attacker_unit_count();
    let mut records = Vec::new();
    if world.initial_converged() {
        for k in 0..cfg.horizon {
            let action = policy.action(k, dim);
            let rec = world.step(&action);
            let diverged = !rec.converged;
            records.push(rec);
            if diverged && cfg.stop_on_divergence {
                break;
            }
        }
    }
    let mut summary = summarize(cfg.scenario.as_str(), cfg.holdoff, &records);
    if !world.initial_converged() {
        summary.divergence_step = Some(0);
    }
    (records, summary)
}

/// A trained agent plus its per-episode training log.
#[derive(Debug)]
pub struct TrainOutcome {
    pub sac: Sac<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Episodic run results (training evaluation); one record list per episode.
#[derive(Debug)]
pub struct EvalOutcome {
    pub episodes: Vec<EpisodeRecord>,
    pub records: Vec<Vec<StepRecord>>,
}

impl EvalOutcome {
    pub fn summary(&self, scenario: &str) -> RunSummary {
        let all: Vec<&StepRecord> = self.records.iter().flatten().collect();
        let steps = all.len() as u64;
        let converged_steps = all.iter().filter(|r| r.converged).count() as u64;
        let violation_steps = all.iter().filter(|r| r.converged && r.violation).count() as u64;
        let max_v_dev = all
            .iter()
            .filter(|r| r.converged)
            .fold(0.0, |m: f64, r| m.max(max_bus_dev(r)));
        let mean_objective = if all.is_empty() {
            0.0
        } else {
            all.iter().map(|r| r.objective).sum::<f64>() / steps as f64
        };
        RunSummary {
            scenario: scenario.to_string(),
            steps,
            converged_steps,
            violation_steps,
            max_v_dev,
            mean_objective,
            divergence_step: None,
            period_peaks: Vec::new(),
            episodes: Some(self.episodes.len() as u64),
            violation_episodes: Some(
                self.episodes.iter().filter(|e| e.violation_steps > 0).count() as u64,
            ),
            diverged_episodes: Some(self.episodes.iter().filter(|e| e.diverged).count() as u64),
        }
    }
}

fn episode_start(cfg: &ScenarioConfig, offsets: &mut ChaCha20Rng) -> DateTime<Utc> {
    cfg.start + Duration::days(offsets.random_range(0..365i64))
}

fn finish_episode(
    episode: u64,
    start: DateTime<Utc>,
    steps: u64,
    episode_return: f64,
    violation_steps: u64,
    diverged: bool,
) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        start,
        steps,
        episode_return,
        mean_objective: if steps == 0 { 0.0 } else { episode_return / steps as f64 },
        violation_steps,
        diverged,
    }
}

/// Trains a fresh agent on the configured environment. Periodic checkpoints
/// land in `checkpoint_dir` (if given) every `training.checkpoint_every`
/// episodes as `checkpoint_ep<N>.ckpt`.
pub fn train(
    data: &ScenarioData,
    cfg: &ScenarioConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, HarnessError> {
    let tr = &cfg.training;
    let probe = World::new(data, cfg);
    let obs_dim = probe.observation_dim();
    let act_dim = probe.attacker_unit_count();
    if act_dim == 0 {
        return Err(HarnessError::Data("grid has no attacker units to train".into()));
    }
    drop(probe);

    let mut sac_cfg = SacConfig::<f64>::new(obs_dim, act_dim);
    sac_cfg.hidden = tr.hidden.clone();
    sac_cfg.lr = tr.lr;
    sac_cfg.batch_size = tr.batch_size;
    let mut sac = Sac::new(sac_cfg, cfg.seeds.policy);
    let mut buffer = ReplayBuffer::new(sac.cfg.buffer_capacity);
    let mut warmup_rng = ChaCha20Rng::seed_from_u64(cfg.seeds.policy ^ WARMUP_SALT);
    let mut offsets = ChaCha20Rng::seed_from_u64(cfg.seeds.run);

    let mut episodes = Vec::new();
    let mut total: u64 = 0;
    let mut episode: u64 = 0;
    let mut dead_streak = 0u32;
    while total < tr.env_steps {
        let start = episode_start(cfg, &mut offsets);
        let mut world = World::with_start(data, cfg, start);
        if !world.initial_converged() {
            episodes.push(finish_episode(episode, start, 0, 0.0, 0, true));
            episode += 1;
            dead_streak += 1;
            if dead_streak > 8 {
                return Err(HarnessError::Data(
                    "initial power flow failed for 8 consecutive episodes".into(),
                ));
            }
            continue;
        }
        dead_streak = 0;

        let mut obs = world.attacker_observation();
        let mut episode_return = 0.0;
        let mut violation_steps = 0u64;
        let mut diverged = false;
        let mut steps = 0u64;
        for _ in 0..cfg.episode_length {
            let action: Vec<f64> = if total < tr.warmup_steps {
                (0..act_dim).map(|_| warmup_rng.random_range(-1.0..=1.0)).collect()
            } else {
                sac.select_action(&obs, false)
            };
            let rec = world.step(&action);
            total += 1;
            steps += 1;
            episode_return += rec.objective;
            violation_steps += u64::from(rec.converged && rec.violation);
            diverged = !rec.converged;
            let next_obs = world.attacker_observation();
            buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action: rec.action,
                reward: rec.objective,
                next_obs: next_obs.clone(),
                done: diverged,
            });
            obs = next_obs;
            if total >= tr.warmup_steps && buffer.len() >= sac.cfg.batch_size {
                for _ in 0..tr.updates_per_step {
                    sac.sac_update(&buffer);
                }
            }
            if diverged || total >= tr.env_steps {
                break;
            }
        }
        episodes.push(finish_episode(
            episode,
            start,
            steps,
            episode_return,
            violation_steps,
            diverged,
        ));
        episode += 1;
        if let Some(dir) = checkpoint_dir {
            if episode % tr.checkpoint_every == 0 {
                save(&sac, &dir.join(format!("checkpoint_ep{episode:05}.ckpt")))?;
            }
        }
    }
    Ok(TrainOutcome { sac, episodes })
}

/// Runs `n` episodes driven by `policy`, with day offsets drawn from
/// `offset_seed`. Shared chassis for greedy and random evaluation.
pub fn run_episodes(
    data: &ScenarioData,
    cfg: &ScenarioConfig,
    n: u64,
    offset_seed: u64,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> EvalOutcome {
    let mut offsets = ChaCha20Rng::seed_from_u64(offset_seed);
    let mut episodes = Vec::new();
    let mut records = Vec::new();
    for episode in 0..n {
        let start = episode_start(cfg, &mut offsets);
        let mut world = World::with_start(data, cfg, start);
        if !world.initial_converged() {
            episodes.push(finish_episode(episode, start, 0, 0.0, 0, true));
            records.push(Vec::new());
            continue;
        }
        let mut obs = world.attacker_observation();
        let mut episode_return = 0.0;
        let mut violation_steps = 0u64;
        let mut diverged = false;
        let mut recs = Vec::new();
        for _ in 0..cfg.episode_length {
            let rec = world.step(&policy(&obs));
            episode_return += rec.objective;
            violation_steps += u64::from(rec.converged && rec.violation);
            diverged = !rec.converged;
            obs = world.attacker_observation();
            recs.push(rec);
            if diverged {
                break;
            }
        }
        episodes.push(finish_episode(
            episode,
            start,
            recs.len() as u64,
            episode_return,
            violation_steps,
            diverged,
        ));
        records.push(recs);
    }
    EvalOutcome { episodes, records }
}

/// Deterministic (tanh-mean) evaluation of a trained agent.
pub fn evaluate_sac(
    sac: &mut Sac<f64>,
    data: &ScenarioData,
    cfg: &ScenarioConfig,
    n: u64,
) -> EvalOutcome {
    run_episodes(data, cfg, n, cfg.seeds.run ^ EVAL_SALT, |obs| sac.select_action(obs, true))
}

/// Uniform-random reference policy on the same evaluation episodes.
pub fn evaluate_random(data: &ScenarioData, cfg: &ScenarioConfig, n: u64) -> EvalOutcome {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seeds.policy ^ RANDOM_POLICY_SALT);
    let probe = World::new(data, cfg);
    let dim = probe.attacker_unit_count();
    drop(probe);
    run_episodes(data, cfg, n, cfg.seeds.run ^ EVAL_SALT, move |_| {
        (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    })
}

/// Loads a checkpoint, checks its dimensions against the configured
/// environment, and evaluates it greedily for `episodes` episodes.
pub fn evaluate_policy(
    checkpoint: &Path,
    mut cfg: ScenarioConfig,
    episodes: u64,
) -> Result<(RunSummary, EvalOutcome), HarnessError> {
    let data = ScenarioData::load(&cfg)?;
    cfg.validate_with_grid(&data.grid)?;
    let mut sac: Sac<f64> = crate::learner::load(checkpoint)?;
    let probe = World::new(&data, &cfg);
    let (obs_dim, act_dim) = (probe.observation_dim(), probe.attacker_unit_count());
    drop(probe);
    if sac.cfg.obs_dim != obs_dim || sac.cfg.act_dim != act_dim {
        return Err(HarnessError::Policy(format!(
            "checkpoint expects obs {} / act {}, environment provides obs {obs_dim} / act {act_dim}",
            sac.cfg.obs_dim, sac.cfg.act_dim
        )));
    }
    let outcome = evaluate_sac(&mut sac, &data, &cfg, episodes);
    Ok((outcome.summary(cfg.scenario.as_str()), outcome))
}

/// Executes the configured scenario end to end and writes `trace.csv` and
/// `summary.toml` (plus `episodes.csv` and checkpoints for training runs)
/// into `cfg.out_dir`.
pub fn run_scenario(mut cfg: ScenarioConfig) -> Result<RunSummary, HarnessError> {
    let data = ScenarioData::load(&cfg)?;
    cfg.validate_with_grid(&data.grid)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::file(&cfg.out_dir, e))?;
    let out = cfg.out_dir.clone();

    let summary = match cfg.scenario {
        Scenario::Baseline | Scenario::S1StaticAttack | Scenario::S2TimeseriesAttack => {
            let policy = match cfg.scenario {
                Scenario::Baseline => ScriptedPolicy::Zero,
                _ => ScriptedPolicy::Oscillating { holdoff: cfg.holdoff },
            };
            let (records, summary) = rollout(&data, &cfg, policy);
            write_trace(&out.join("trace.csv"), &data.grid, &records)
                .map_err(|e| HarnessError::file(&out.join("trace.csv"), e))?;
            summary
        }
        Scenario::S3LearnedAttack => {
            let outcome = train(&data, &cfg, Some(&out))?;
            save(&outcome.sac, &out.join("checkpoint.ckpt"))?;
            write_episode_log(&out.join("episodes.csv"), &outcome.episodes)
                .map_err(|e| HarnessError::file(&out.join("episodes.csv"), e))?;
            let mut sac = outcome.sac;
            let eval = evaluate_sac(&mut sac, &data, &cfg, cfg.training.eval_episodes);
            if let Some(first) = eval.records.first() {
                write_trace(&out.join("trace.csv"), &data.grid, first)
                    .map_err(|e| HarnessError::file(&out.join("trace.csv"), e))?;
            }
            eval.summary(cfg.scenario.as_str())
        }
    };
    write_summary(&out.join("summary.toml"), &summary)
        .map_err(|e| HarnessError::file(&out.join("summary.toml"), e))?;
    Ok(summary)
}
