//! Diff-able run artifacts.
//!
//! Layouts are fixed so traces serve as regression fixtures:
//!
//! * `trace.csv` — one header row, then exactly one row per executed step:
//!   `step,timestamp,converged,violation,objective,act_<bus>...,v_b<id>...,`
//!   `qrel_u<i>...,p_u<i>...` with buses in `Grid::buses` order, units in
//!   `Grid::units` order, attacker action columns in ascending bus order.
//! * `summary.toml` — the `RunSummary` fields as a TOML table.
//! * `episodes.csv` — one row per training/evaluation episode.
//!
//! Floats use Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::SecondsFormat;

use super::runner::{EpisodeRecord, RunSummary};
use super::world::StepRecord;
use crate::grid::{ControllerKind, Grid};

pub fn render_trace(grid: &Grid<f64>, records: &[StepRecord]) -> String {
    let mut out = String::new();
    out.push_str("step,timestamp,converged,violation,objective");
    let mut attacker_buses: Vec<usize> = grid
        .units
        .iter()
        .filter(|u| u.controller == ControllerKind::Attacker)
        .map(|u| u.bus)
        .collect();
    attacker_buses.sort_unstable();
    for bus in &attacker_buses {
        let _ = write!(out, ",act_{bus}");
    }
    for bus in &grid.buses {
        let _ = write!(out, ",v_b{}", bus.id);
    }
    for i in 0..grid.units.len() {
        let _ = write!(out, ",qrel_u{i}");
    }
    for i in 0..grid.units.len() {
        let _ = write!(out, ",p_u{i}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.step,
            r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            r.converged,
            r.violation,
            r.objective
        );
        for group in [&r.action, &r.v_mag, &r.q_rel, &r.p_now] {
            for x in group {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(
    path: &Path,
    grid: &Grid<f64>,
    records: &[StepRecord],
) -> std::io::Result<()> {
    fs::write(path, render_trace(grid, records))
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> std::io::Result<()> {
    let body = toml::to_string(summary).expect("summary serializes");
    fs::write(path, body)
}

pub fn render_episode_log(episodes: &[EpisodeRecord]) -> String {
    let mut out = String::from(
        "episode,start,steps,episode_return,mean_objective,violation_steps,diverged\n",
    );
    for e in episodes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.episode,
            e.start.to_rfc3339_opts(SecondsFormat::Secs, true),
            e.steps,
            e.episode_return,
            e.mean_objective,
            e.violation_steps,
            e.diverged
        );
    }
    out
}

pub fn write_episode_log(path: &Path, episodes: &[EpisodeRecord]) -> std::io::Result<()> {
    fs::write(path, render_episode_log(episodes))
}
