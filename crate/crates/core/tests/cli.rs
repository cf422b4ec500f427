mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subprune::eval::read_report;
use subprune::linalg::cache::read_cache;
use subprune::model::load_model;

fn run(out: &Path, args: &[&str]) -> Output {
    let cfg = common::digits_dir().join("run.json");
    Command::new(common::bin())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn widths(model: &Path) -> Vec<usize> {
    let net = load_model(model).unwrap();
    net.prune_sites().iter().map(|s| s.units).collect()
}

fn pruned(out: &Path) -> PathBuf {
    out.join("model.pruned.snm")
}

#[test]
fn missing_model_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--model", "/nonexistent/model.snm", "collect"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
}

#[test]
fn unknown_config_key_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model": "m.snm", "ratoi": 0.5}"#).unwrap();
    let o = Command::new(common::bin()).arg("--config").arg(&cfg).arg("collect").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uniform_half_halves_widths_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["collect"]);
    let grams = read_cache(&out.join("grams")).unwrap();
    assert!(grams.grams.iter().all(|g| g.sample_count() == 1024));
    let stdout = ok(out, &["prune"]);
    assert!(stdout.contains("sha256"));
    let before = widths(&common::digits_dir().join("mlp.snm"));
    let after = widths(&pruned(out));
    assert_eq!(after, before.iter().map(|w| w / 2).collect::<Vec<_>>());
    for site in [2, 4] {
        assert!(out.join(format!("plans/layer_{site}.json")).exists());
    }
    let report = read_report(&out.join("report.json")).unwrap();
    assert!(report.totals.flops_after < report.totals.flops_before);
    assert!(report.metrics.is_some());
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 + 1);
    ok(out, &["report"]);
}

#[test]
fn zero_tau_keeps_every_unit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["--samples", "256", "collect"]);
    ok(out, &["--mode", "variance_cutoff", "--tau", "0", "prune"]);
    assert_eq!(widths(&pruned(out)), widths(&common::digits_dir().join("mlp.snm")));
    let report = read_report(&out.join("report.json")).unwrap();
    let m = report.metrics.unwrap();
    assert!(m.delta.abs() < 1e-12, "delta {}", m.delta);
}

#[test]
fn random_method_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(out, &["--samples", "256", "collect"]);
        ok(out, &["--method", "random", "--seed", "7", "prune"]);
    }
    for f in ["report.json", "plans/layer_2.json", "model.pruned.snm/tensors.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn stale_cache_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["--samples", "128", "collect"]);
    let cfg = dir.path().join("bias.json");
    let mut v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(common::digits_dir().join("run.json")).unwrap()).unwrap();
    let d = common::digits_dir();
    v["model"] = d.join("mlp.snm").to_str().unwrap().into();
    v["data"]["calibration"]["path"] = d.join("train-images-idx3-ubyte").to_str().unwrap().into();
    v["data"]["calibration"]["labels"] = d.join("train-labels-idx1-ubyte").to_str().unwrap().into();
    v["data"]["test"]["path"] = d.join("test-images-idx3-ubyte").to_str().unwrap().into();
    v["data"]["test"]["labels"] = d.join("test-labels-idx1-ubyte").to_str().unwrap().into();
    v["absorb_bias"] = true.into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = Command::new(common::bin())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .arg("prune")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn prune_without_cache_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["prune"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn white_noise_collect_needs_no_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noise.json");
    let model = common::digits_dir().join("mlp.snm");
    std::fs::write(&cfg, serde_json::json!({ "model": model }).to_string()).unwrap();
    let o = Command::new(common::bin())
        .arg("--config")
        .arg(&cfg)
        .args(["--white-noise", "--samples", "300", "collect"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grams = read_cache(&dir.path().join("out/grams")).unwrap();
    assert!(grams.grams.iter().all(|g| g.sample_count() == 300));
}

#[test]
fn eval_json_reports_delta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["--samples", "512", "collect"]);
    ok(out, &["prune"]);
    let v: serde_json::Value = serde_json::from_str(&ok(out, &["eval", "--json"])).unwrap();
    let (a, b) = (v["original"]["accuracy"].as_f64().unwrap(), v["pruned"]["accuracy"].as_f64().unwrap());
    assert!((v["delta"].as_f64().unwrap() - (b - a)).abs() < 1e-15);
}

#[test]
fn verify_passes_and_injected_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let stdout = ok(out, &["verify"]);
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
    let o = run(out, &["verify", "--inject-fault", "1e-3"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
