//! Scenario orchestration: configuration files, the stepped simulation
//! world, the scenario runner, and run artifacts.
//!
//! The data flow is `ScenarioConfig` (TOML, [`config`]) → [`ScenarioData`]
//! (grid + bound time series) → [`World`] (one stepped closed-loop
//! simulation) → [`runner::run_scenario`] (scripted rollout or training) →
//! trace/summary files ([`trace`]).

pub mod config;
pub mod runner;
pub mod trace;
pub mod world;

use std::path::{Path, PathBuf};

pub use config::{load_config, parse_config, ConfigError, Scenario, ScenarioConfig};
pub use runner::{
    evaluate_policy, evaluate_random, evaluate_sac, rollout, run_scenario, train, EpisodeRecord,
    EvalOutcome, RunSummary, ScriptedPolicy, TrainOutcome,
};
pub use world::{ScenarioData, StepRecord, World};

use crate::grid::GridError;
use crate::learner::CheckpointError;
use crate::timeseries::TimeseriesError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("time series: {0}")]
    Series(#[from] TimeseriesError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot access {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Inputs that parse but do not fit together (missing bindings, wrong
    /// channels, impossible environments).
    #[error("{0}")]
    Data(String),
    /// Checkpoint/environment shape mismatches.
    #[error("policy: {0}")]
    Policy(String),
}

impl HarnessError {
    pub fn file(path: &Path, source: std::io::Error) -> Self {
        HarnessError::File { path: path.to_path_buf(), source }
    }

    /// Process exit code contract: 3 for I/O failures, 2 for everything
    /// else (bad configuration or inconsistent inputs).
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::File { .. } => 3,
            HarnessError::Config(ConfigError::Io { .. }) => 3,
            HarnessError::Checkpoint(CheckpointError::Io(_)) => 3,
            _ => 2,
        }
    }
}
