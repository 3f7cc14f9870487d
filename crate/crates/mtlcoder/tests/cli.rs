//! End-to-end exercises of the command-line binary: generate -> train ->
//! eval -> report, plus the documented exit codes for usage errors.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mtlcoder(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtlcoder"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path) -> String {
    let spec = serde_json::json!({
        "task": "toy",
        "vocab_size": 20,
        "labels": [
            {"code": "A", "marker": "alpha", "probability": 0.5}
        ],
        "sessions": 15,
        "turns_per_session": [3, 5],
        "words_per_turn": [3, 6],
        "seed": 42
    });
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_vec_pretty(&spec).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn write_config(dir: &Path, corpus: &str, out: &str) -> String {
    let config = serde_json::json!({
        "corpus": corpus,
        "out": out,
        "model": {
            "embedding_dim": 6,
            "hidden_dim": 6,
            "turn_hidden_dim": 6,
            "max_epochs": 2,
            "n_seeds": 1
        }
    });
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn pipeline_generate_train_eval_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = write_spec(dir);

    let out = mtlcoder(&["generate", "--spec", &spec, "--out", "corpus.jsonl"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sessions: 15"), "stdout: {stdout}");
    assert!(dir.join("corpus.jsonl").exists());
    assert!(dir.join("corpus.jsonl.space.json").exists());

    let config = write_config(dir, "corpus.jsonl", "runs");
    let out = mtlcoder(&["train", "--config", &config], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean validation macro-f1"), "stdout: {stdout}");
    assert!(dir.join("runs/seed0.ckpt").exists());
    assert!(dir.join("runs/seed0.metrics.jsonl").exists());

    // Each metrics line is one JSON epoch record.
    let log = fs::read_to_string(dir.join("runs/seed0.metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("train_loss").is_some());
    }

    let out = mtlcoder(
        &[
            "eval",
            "--checkpoint",
            "runs/seed0.ckpt",
            "--corpus",
            "corpus.jsonl",
            "--report",
            "report.json",
            "--format",
            "json",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro-f1:"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["task"], "toy");

    let out = mtlcoder(&["report", "--report", "report.json", "--format", "csv"], dir);
    assert!(out.status.success());
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("code,precision,recall,f1,baseline,flagged"), "csv: {csv}");
}

#[test]
fn train_is_idempotent_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = write_spec(dir);
    mtlcoder(&["generate", "--spec", &spec, "--out", "corpus.jsonl"], dir);
    let config = write_config(dir, "corpus.jsonl", "runs");

    assert!(mtlcoder(&["train", "--config", &config], dir).status.success());
    let first = fs::read(dir.join("runs/seed0.ckpt")).unwrap();
    assert!(mtlcoder(&["train", "--config", &config], dir).status.success());
    let second = fs::read(dir.join("runs/seed0.ckpt")).unwrap();
    assert_eq!(first, second, "re-running training changed the checkpoint");
}

#[test]
fn missing_spec_file_exits_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mtlcoder(
        &["generate", "--spec", "no-such.json", "--out", "c.jsonl"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn multitask_training_without_init_checkpoints_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = write_spec(dir);
    mtlcoder(&["generate", "--spec", &spec, "--out", "a.jsonl"], dir);
    mtlcoder(&["generate", "--spec", &spec, "--out", "b.jsonl"], dir);
    let config = serde_json::json!({
        "corpus": "a.jsonl",
        "corpus_b": "b.jsonl",
        "out": "runs",
        "model": {"regime": "mlmt", "n_seeds": 1}
    });
    fs::write(dir.join("mt.json"), serde_json::to_vec(&config).unwrap()).unwrap();
    let out = mtlcoder(&["train", "--config", "mt.json"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("init_a"));
}

#[test]
fn unknown_report_format_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("r.json"), b"{}").unwrap();
    let out = mtlcoder(
        &["report", "--report", "r.json", "--format", "yaml"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_override_value_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = write_spec(dir);
    mtlcoder(&["generate", "--spec", &spec, "--out", "corpus.jsonl"], dir);
    let config = write_config(dir, "corpus.jsonl", "runs");
    let out = mtlcoder(
        &["train", "--config", &config, "--sample-weights", "maybe"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected on|off"));
}

#[test]
fn override_flags_reach_the_training_config() {
    // --seeds 2 must produce two checkpoints; --seed shifts their names.
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = write_spec(dir);
    mtlcoder(&["generate", "--spec", &spec, "--out", "corpus.jsonl"], dir);
    let config = write_config(dir, "corpus.jsonl", "runs");
    let out = mtlcoder(
        &["train", "--config", &config, "--seeds", "2", "--seed", "7"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("runs/seed7.ckpt").exists());
    assert!(dir.join("runs/seed8.ckpt").exists());
}
