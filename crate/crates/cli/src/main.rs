//! Command-line front end: scenario runs, training, checkpoint evaluation,
//! and grid-file validation.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use voltlab::harness::{
    evaluate_policy, load_config, run_scenario, HarnessError, RunSummary, Scenario,
};

#[derive(Parser)]
#[command(name = "voltlab", version, about = "Volt/VAr oscillation attack laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the scenario described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the environment seed (`seeds.run`).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the learned attacker (requires an s3 config).
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a saved checkpoint greedily on the configured environment.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: u64,
    },
    /// Parse and validate a grid file.
    ValidateGrid { file: PathBuf },
}

fn describe(summary: &RunSummary) {
    println!(
        "scenario {}: {} steps, {} converged, {} violation steps, max |v-1| = {:.4}, \
         mean objective = {:.4}",
        summary.scenario,
        summary.steps,
        summary.converged_steps,
        summary.violation_steps,
        summary.max_v_dev,
        summary.mean_objective
    );
    if let Some(step) = summary.divergence_step {
        println!("power flow diverged at step {step}");
    }
    if let (Some(eps), Some(viol), Some(div)) =
        (summary.episodes, summary.violation_episodes, summary.diverged_episodes)
    {
        println!("episodes: {eps}, with violations: {viol}, diverged: {div}");
    }
}

fn run(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seeds.run = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let out_dir = cfg.out_dir.clone();
            let summary = run_scenario(cfg)?;
            describe(&summary);
            println!("artifacts in {}", out_dir.display());
        }
        Cmd::Train { config } => {
            let cfg = load_config(&config)?;
            if cfg.scenario != Scenario::S3LearnedAttack {
                return Err(HarnessError::Data(format!(
                    "train requires scenario \"s3_learned_attack\", config says \"{}\"",
                    cfg.scenario.as_str()
                )));
            }
            let out_dir = cfg.out_dir.clone();
            let summary = run_scenario(cfg)?;
            describe(&summary);
            println!("checkpoint and episode log in {}", out_dir.display());
        }
        Cmd::Eval { checkpoint, config, episodes } => {
            let cfg = load_config(&config)?;
            let (summary, _) = evaluate_policy(&checkpoint, cfg, episodes)?;
            print!("{}", toml::to_string(&summary).expect("summary serializes"));
        }
        Cmd::ValidateGrid { file } => {
            let doc = std::fs::read_to_string(&file)
                .map_err(|e| HarnessError::file(Path::new(&file), e))?;
            let grid = voltlab::grid::load_grid::<f64>(&doc)?;
            println!(
                "{}: ok ({} buses, {} branches, {} loads, {} units, slack at bus {})",
                file.display(),
                grid.buses.len(),
                grid.branches.len(),
                grid.loads.len(),
                grid.units.len(),
                grid.buses[grid.slack_index()].id
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
