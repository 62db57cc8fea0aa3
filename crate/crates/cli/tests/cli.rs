//! End-to-end checks of the `voltlab` binary: exit codes, stdout shape,
//! and the artifacts each subcommand leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voltlab::learner::{save, Sac, SacConfig};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn voltlab_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltlab"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

#[test]
fn validate_grid_accepts_the_shipped_network() {
    let grid = repo_path("data/cigre_mv.toml");
    let out = voltlab_cmd(&["validate-grid", grid.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("ok (15 buses"), "{text}");
    assert!(text.contains("slack at bus 0"), "{text}");
}

#[test]
fn validate_grid_missing_file_is_an_io_error() {
    let out = voltlab_cmd(&["validate-grid", "/nonexistent/grid.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}

#[test]
fn validate_grid_rejects_a_broken_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    // Parses fine; the branch references a bus that does not exist.
    std::fs::write(
        &path,
        r#"
s_base_mva = 1.0

[[buses]]
id = 0
kind = "slack"
base_kv = 20.0

[[buses]]
id = 1
base_kv = 20.0

[[branches]]
from = 0
to = 7
r_ohm_per_km = 1.0
x_ohm_per_km = 2.0
length_km = 1.0
"#,
    )
    .unwrap();
    let out = voltlab_cmd(&["validate-grid", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("unknown bus"), "{}", stderr_of(&out));
}

#[test]
fn run_writes_artifacts_where_told() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let cfg = repo_path("configs/baseline.toml");
    let out = voltlab_cmd(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("200 steps, 200 converged"), "{text}");
    assert!(out_dir.join("trace.csv").is_file());
    let summary = std::fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    assert!(summary.contains("scenario = \"baseline\""), "{summary}");
    assert!(summary.contains("violation_steps = 0"), "{summary}");
}

#[test]
fn run_rejects_a_config_pointing_at_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        r#"
scenario = "baseline"
grid = "does_not_exist.toml"
start = "2021-07-05T12:00:00Z"
out_dir = "out"
[weather]
day_type = "clear"
"#,
    )
    .unwrap();
    let out = voltlab_cmd(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}

#[test]
fn train_refuses_non_training_scenarios() {
    let cfg = repo_path("configs/s1.toml");
    let out = voltlab_cmd(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("s3_learned_attack"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn eval_prints_a_summary_for_a_compatible_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("fresh.ckpt");
    // The s1 environment exposes 3 sensor voltages + 3 setpoints.
    save(&Sac::new(SacConfig::<f64>::new(6, 3), 42), &ckpt).unwrap();
    let cfg = repo_path("configs/s1.toml");
    let out = voltlab_cmd(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let summary: toml::Table = stdout_of(&out).parse().expect("stdout is TOML");
    assert_eq!(summary["episodes"].as_integer(), Some(2));
    assert_eq!(summary["scenario"].as_str(), Some("s1_static_attack"));
}

#[test]
fn eval_rejects_a_checkpoint_with_wrong_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("misfit.ckpt");
    save(&Sac::new(SacConfig::<f64>::new(4, 2), 42), &ckpt).unwrap();
    let cfg = repo_path("configs/s1.toml");
    let out = voltlab_cmd(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("obs 4 / act 2"), "{}", stderr_of(&out));
}

#[test]
fn eval_missing_checkpoint_is_an_io_error() {
    let cfg = repo_path("configs/s1.toml");
    let out = voltlab_cmd(&[
        "eval",
        "--checkpoint",
        "/nonexistent/policy.ckpt",
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}
