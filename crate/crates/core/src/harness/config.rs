//! Scenario configuration: TOML schema, path resolution, and validation.
//!
//! Paths inside a config file (grid document, profile CSVs, output
//! directory) are resolved relative to the config file's own directory, so
//! a scenario directory can be moved as a unit.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use crate::agents::{ObjectiveParams, ObjectiveVariant};
use crate::grid::{ControllerKind, Grid};
use crate::timeseries::DayType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// No attacker actions; establishes the quiet operating point.
    Baseline,
    /// Deterministic oscillating attacker under constant weather.
    S1StaticAttack,
    /// Same attacker under seasonal weather and consumer profiles.
    S2TimeseriesAttack,
    /// SAC attacker trained in the seasonal environment.
    S3LearnedAttack,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::S1StaticAttack => "s1_static_attack",
            Scenario::S2TimeseriesAttack => "s2_timeseries_attack",
            Scenario::S3LearnedAttack => "s3_learned_attack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileChannel {
    Irradiance,
    LoadP,
    LoadQ,
}

#[derive(Debug, Clone)]
pub struct ProfileBinding {
    pub key: String,
    pub channel: ProfileChannel,
    pub file: PathBuf,
}

#[derive(Debug, Clone)]
pub struct WeatherConfig {
    pub day_type: DayType,
    /// Freeze irradiance at its value at the simulation start.
    pub constant: bool,
    /// Active-power derate: p_now = fraction * s_rated * min(1, G/1000).
    /// Below 1.0 so inverters keep reactive headroom at peak sun.
    pub pv_active_fraction: f64,
    /// Ingest irradiance from this file instead of synthesizing it.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Environment stream: weather synthesis, episode offsets.
    pub run: u64,
    /// Agent stream: network init, exploration noise, minibatch draws.
    pub policy: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { run: 1, policy: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Total environment steps across all episodes.
    pub env_steps: u64,
    /// Steps with uniform-random actions before updates begin.
    pub warmup_steps: u64,
    pub updates_per_step: u64,
    pub eval_episodes: u64,
    /// Checkpoint cadence in episodes; the final state is always written.
    pub checkpoint_every: u64,
    /// Add q_avail/s_rated per attacker unit to the observation.
    pub observe_headroom: bool,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            env_steps: 40_000,
            warmup_steps: 1_000,
            updates_per_step: 1,
            eval_episodes: 20,
            checkpoint_every: 100,
            observe_headroom: false,
            hidden: vec![64, 64],
            lr: 3e-4,
            batch_size: 256,
        }
    }
}

/// Fully resolved scenario description (absolute paths, defaults applied).
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub grid: PathBuf,
    pub start: DateTime<Utc>,
    pub step_seconds: u64,
    pub horizon: u64,
    /// Steps per training/evaluation episode (scenario 3).
    pub episode_length: u64,
    pub attacker_buses: Vec<usize>,
    pub sensor_buses: Vec<usize>,
    pub holdoff: u64,
    /// Volt/VAr law step size d, shared by every benign controller.
    pub controller_step_size: f64,
    pub voltage_band: [f64; 2],
    /// End the run at the first non-converged power flow.
    pub stop_on_divergence: bool,
    /// Attach the profile-keyed consumer loads.
    pub consumers: bool,
    pub objective: ObjectiveParams<f64>,
    pub weather: WeatherConfig,
    pub seeds: Seeds,
    pub training: TrainingConfig,
    pub out_dir: PathBuf,
    pub profiles: Vec<ProfileBinding>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
}

// --- raw file schema -------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Scenario,
    grid: PathBuf,
    start: DateTime<Utc>,
    #[serde(default = "d_step_seconds")]
    step_seconds: u64,
    #[serde(default = "d_horizon")]
    horizon: u64,
    #[serde(default = "d_episode_length")]
    episode_length: u64,
    #[serde(default)]
    attacker_buses: Vec<usize>,
    #[serde(default)]
    sensor_buses: Vec<usize>,
    #[serde(default = "d_holdoff")]
    holdoff: u64,
    #[serde(default = "d_controller_step")]
    controller_step_size: f64,
    #[serde(default = "d_band")]
    voltage_band: [f64; 2],
    #[serde(default = "d_true")]
    stop_on_divergence: bool,
    #[serde(default)]
    consumers: bool,
    #[serde(default)]
    objective: FileObjective,
    weather: FileWeather,
    #[serde(default)]
    seeds: Seeds,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default = "d_out_dir")]
    out_dir: PathBuf,
    #[serde(default)]
    profiles: Vec<FileProfile>,
}

fn d_step_seconds() -> u64 {
    900
}
fn d_horizon() -> u64 {
    200
}
fn d_episode_length() -> u64 {
    96
}
fn d_holdoff() -> u64 {
    25
}
fn d_controller_step() -> f64 {
    crate::voltvar::DEFAULT_STEP_SIZE
}
fn d_band() -> [f64; 2] {
    [0.95, 1.05]
}
fn d_true() -> bool {
    true
}
fn d_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileObjective {
    mu: f64,
    sigma: f64,
    c: f64,
    a: f64,
    variant: ObjectiveVariant,
}

impl Default for FileObjective {
    fn default() -> Self {
        let d = ObjectiveParams::<f64>::default();
        Self { mu: d.mu, sigma: d.sigma, c: d.c, a: d.a, variant: d.variant }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWeather {
    day_type: DayType,
    #[serde(default)]
    constant: bool,
    #[serde(default = "d_pv_fraction")]
    pv_active_fraction: f64,
    #[serde(default)]
    file: Option<PathBuf>,
}

fn d_pv_fraction() -> f64 {
    0.9
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProfile {
    key: String,
    channel: ProfileChannel,
    file: PathBuf,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parses and validates a scenario config document. `base` is the directory
/// relative paths resolve against (the config file's parent for
/// [`load_config`]).
pub fn parse_config(document: &str, base: &Path) -> Result<ScenarioConfig, ConfigError> {
    let raw: FileConfig = toml::from_str(document)?;
    let cfg = ScenarioConfig {
        scenario: raw.scenario,
        grid: resolve(base, raw.grid),
        start: raw.start,
        step_seconds: raw.step_seconds,
        horizon: raw.horizon,
        episode_length: raw.episode_length,
        sensor_buses: if raw.sensor_buses.is_empty() {
            raw.attacker_buses.clone()
        } else {
            raw.sensor_buses
        },
        attacker_buses: raw.attacker_buses,
        holdoff: raw.holdoff,
        controller_step_size: raw.controller_step_size,
        voltage_band: raw.voltage_band,
        stop_on_divergence: raw.stop_on_divergence,
        consumers: raw.consumers,
        objective: ObjectiveParams {
            mu: raw.objective.mu,
            sigma: raw.objective.sigma,
            c: raw.objective.c,
            a: raw.objective.a,
            variant: raw.objective.variant,
        },
        weather: WeatherConfig {
            day_type: raw.weather.day_type,
            constant: raw.weather.constant,
            pv_active_fraction: raw.weather.pv_active_fraction,
            file: raw.weather.file.map(|f| resolve(base, f)),
        },
        seeds: raw.seeds,
        training: raw.training,
        out_dir: resolve(base, raw.out_dir),
        profiles: raw
            .profiles
            .into_iter()
            .map(|p| ProfileBinding {
                key: p.key,
                channel: p.channel,
                file: resolve(base, p.file),
            })
            .collect(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let document = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&document, base)
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.horizon < 1 {
            return invalid("horizon must be >= 1".into());
        }
        if self.episode_length < 1 {
            return invalid("episode_length must be >= 1".into());
        }
        if self.step_seconds < 1 {
            return invalid("step_seconds must be >= 1".into());
        }
        if self.holdoff < 1 {
            return invalid("holdoff must be >= 1".into());
        }
        if self.controller_step_size <= 0.0 {
            return invalid("controller_step_size must be > 0".into());
        }
        let [lo, hi] = self.voltage_band;
        if !(lo < 1.0 && 1.0 < hi) {
            return invalid(format!("voltage_band [{lo}, {hi}] must straddle 1.0"));
        }
        if self.objective.sigma == 0.0 {
            return invalid("objective.sigma must be nonzero".into());
        }
        let f = self.weather.pv_active_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return invalid(format!("pv_active_fraction {f} outside (0, 1]"));
        }
        if self.training.env_steps < 1 || self.training.batch_size < 1 {
            return invalid("training budget and batch size must be >= 1".into());
        }
        let mut keys = BTreeSet::new();
        for p in &self.profiles {
            if !keys.insert((p.key.clone(), p.channel)) {
                return invalid(format!("duplicate profile binding {}:{:?}", p.key, p.channel));
            }
        }
        Ok(())
    }

    /// Cross-checks against the loaded grid: the configured attacker set
    /// must equal the grid's attacker-controlled unit buses and stay
    /// disjoint from the Volt/VAr-controlled ones; sensors must exist.
    pub fn validate_with_grid(&mut self, grid: &Grid<f64>) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let attackers = grid.unit_buses(ControllerKind::Attacker);
        let controlled = grid.unit_buses(ControllerKind::VoltVar);
        if self.attacker_buses.is_empty() {
            self.attacker_buses = attackers.clone();
        }
        let mut declared = self.attacker_buses.clone();
        declared.sort_unstable();
        declared.dedup();
        if declared != attackers {
            return invalid(format!(
                "attacker_buses {declared:?} do not match the grid's attacker units {attackers:?}"
            ));
        }
        if let Some(bus) = declared.iter().find(|b| controlled.contains(b)) {
            return invalid(format!("bus {bus} is both attacker and Volt/VAr controlled"));
        }
        if self.sensor_buses.is_empty() {
            self.sensor_buses = attackers;
        }
        for &b in &self.sensor_buses {
            if grid.bus_index(b).is_none() {
                return invalid(format!("sensor bus {b} not in grid"));
            }
        }
        // Every profile-keyed load needs both channels bound when consumers
        // are enabled; unused bindings are likely typos.
        if self.consumers {
            for load in &grid.loads {
                if let Some(key) = &load.profile {
                    for ch in [ProfileChannel::LoadP, ProfileChannel::LoadQ] {
                        if !self.profiles.iter().any(|p| &p.key == key && p.channel == ch) {
                            return invalid(format!(
                                "load at bus {} references profile '{key}' but no {ch:?} binding exists",
                                load.bus
                            ));
                        }
                    }
                }
            }
            for p in &self.profiles {
                let used = grid.loads.iter().any(|l| l.profile.as_ref() == Some(&p.key));
                if !used && p.channel != ProfileChannel::Irradiance {
                    return invalid(format!("profile binding '{}' matches no load", p.key));
                }
            }
        }
        Ok(())
    }
}
