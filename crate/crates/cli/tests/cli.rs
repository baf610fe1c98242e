//! End-to-end runs of the binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppuf-fwupdate"))
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, "[puf]\nwidth = 64\n\n[ed]\nset_size = 256\n").unwrap();
    p.to_str().unwrap().to_string()
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{e}: {l}")))
        .collect()
}

#[test]
fn honest_update_exits_zero_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("trace.jsonl");
    let out = bin()
        .args(["update", "--config", &cfg, "--size", "2000", "--trace"])
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!records(&out).is_empty());
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() > 3);
}

#[test]
fn excessive_noise_is_a_protocol_reject() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin()
        .args(["update", "--config", &cfg, "--size", "100", "--noise-flips", "40"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_an_error() {
    let out = bin()
        .args(["update", "--config", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn attack_scenario_reports_defended() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin()
        .args(["attack", "--config", &cfg, "--scenario", "rollback"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = records(&out);
    assert_eq!(r[0]["adversary_succeeded"], false);
    assert_eq!(r[0]["control_accepted"], true);
}

#[test]
fn sac_reports_a_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin()
        .args(["sac", "--config", &cfg, "--vectors", "200"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mean = records(&out)[0]["mean"].as_f64().unwrap();
    assert!(mean > 0.0 && mean < 1.0);
}

#[test]
fn export_then_enroll() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let model = dir.path().join("m.ppuf");
    let store = dir.path().join("store");
    let out = bin()
        .args(["export-model", "--config", &cfg, "--instance", "9", "--out"])
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
    let out = bin()
        .args(["enroll", "--config", &cfg, "--store"])
        .arg(&store)
        .arg("--model")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(store.exists());
}

#[test]
fn bench_small_grid_is_monotonic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin()
        .args(["bench", "--config", &cfg, "--sizes", "1,4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(records(&out).len() >= 6);
}
