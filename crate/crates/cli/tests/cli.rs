use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_autobuild"));
    c.env_remove("AUTOBUILD_OUT_DIR");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn autobuild")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32, kind: &str) {
    let out = run_in(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error: kind={kind} msg=")), "{err}");
}

fn sha(path: &Path) -> String {
    Sha256::digest(fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(path: &Path) -> Value {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Oracle, 120 labeled toy architectures.
fn toy_data(dir: &Path) {
    ok(dir, &["oracle", "gen", "--preset", "toy", "--seed", "3", "--out", "o.toml"]);
    ok(dir, &["sample", "--preset", "toy", "-n", "120", "--seed", "4", "--out", "s.jsonl"]);
    ok(dir, &["label", "--oracle", "o.toml", "--archs", "s.jsonl", "--target", "score=100^(acc/100)/log10(lat)", "--out", "d.jsonl"]);
}

const FAST: &[&str] = &["--epochs", "3", "--batch-size", "32", "--hidden", "8"];

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--preset", "toy", "--data", "d.jsonl", "--out", out];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn space_count_mbv3() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["space", "count", "--preset", "mbv3"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 6);
    for l in &lines[..5] {
        assert!(l.ends_with(": 7371"), "{l}");
    }
    assert_eq!(lines[5], "total: 21758655492572485851 (2.175e19)");
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    fails(dir.path(), &["frobnicate"], 2, "usage");
    fails(dir.path(), &["sample", "--preset", "toy", "--out", "x.jsonl"], 2, "usage");
    fails(dir.path(), &["space", "count"], 2, "usage");
}

#[test]
fn io_errors_exit_4() {
    let dir = TempDir::new().unwrap();
    fails(dir.path(), &["space", "count", "--spec", "missing.toml"], 4, "io");
    fails(dir.path(), &["label", "--oracle", "nope.toml", "--archs", "a.jsonl", "--out", "b.jsonl"], 4, "io");
}

#[test]
fn validation_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fails(d, &["space", "count", "--preset", "resnet"], 3, "validation");
    toy_data(d);
    fails(d, &["label", "--oracle", "o.toml", "--archs", "s.jsonl", "--target", "x=acc +", "--out", "y.jsonl"], 3, "validation");
    fails(d, &["train", "--preset", "mbv3", "--data", "d.jsonl", "--out", "m.json"], 3, "validation");
    fails(d, &["train", "--preset", "toy", "--data", "d.jsonl", "--metric", "missing", "--out", "m.json"], 3, "validation");
    fs::write(d.join("bad.toml"), "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    fails(d, &["train", "--preset", "toy", "--data", "d.jsonl", "--config", "bad.toml", "--out", "m.json"], 3, "validation");
}

#[test]
fn manifests_hash_their_inputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    let m = manifest(&d.join("d.jsonl"));
    assert_eq!(m["command"], "label");
    assert_eq!(m["output"]["sha256"], sha(&d.join("d.jsonl")));
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
    assert_eq!(inputs[0]["sha256"], sha(&d.join("o.toml")));
    assert_eq!(inputs[1]["sha256"], sha(&d.join("s.jsonl")));
    assert_eq!(inputs[1]["manifest_sha256"], sha(&d.join("s.jsonl.manifest.json")));
    assert_eq!(manifest(&d.join("s.jsonl"))["seed"], 4);
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    train(d, "a.json", &["--seed", "7"]);
    train(d, "b.json", &["--seed", "7"]);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    train(d, "c.json", &["--seed", "8"]);
    assert_ne!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("c.json")).unwrap());
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    fs::write(d.join("cfg.toml"), "epochs = 2\nhops = 2\nbatch_size = 16\n").unwrap();
    ok(d, &["train", "--preset", "toy", "--data", "d.jsonl", "--config", "cfg.toml", "--hidden", "8", "--out", "m1.json"]);
    let p = &manifest(&d.join("m1.json"))["config"]["predictor"];
    assert_eq!(p["epochs"], 2);
    assert_eq!(p["hops"], 2);
    assert_eq!(p["hidden"], 8);
    assert_eq!(p["head_hidden"], 32);
    ok(d, &["train", "--preset", "toy", "--data", "d.jsonl", "--config", "cfg.toml", "--epochs", "1", "--out", "m2.json"]);
    let p = &manifest(&d.join("m2.json"))["config"]["predictor"];
    assert_eq!(p["epochs"], 1);
    assert_eq!(p["batch_size"], 16);
}

#[test]
fn out_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    let status = bin()
        .current_dir(dir.path())
        .env("AUTOBUILD_OUT_DIR", out.path())
        .args(["sample", "--preset", "toy", "-n", "5", "--out", "s.jsonl"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.path().join("s.jsonl").exists());
    assert!(out.path().join("s.jsonl.manifest.json").exists());
    assert!(!dir.path().join("s.jsonl").exists());
}

#[test]
fn scoring_reduction_and_building() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    train(d, "m.json", &[]);
    ok(d, &["score", "--preset", "toy", "--model", "m.json", "--out", "t.csv"]);
    let table = fs::read_to_string(d.join("t.csv")).unwrap();
    assert_eq!(table.lines().count(), 61);
    let score = table.lines().nth(1).unwrap().split(',').nth(5).unwrap();
    assert_eq!(score.split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{score}");

    ok(d, &["reduce", "--preset", "toy", "--table", "t.csv", "-k", "2", "--out", "r1.toml"]);
    ok(d, &["reduce", "--preset", "toy", "--table", "t.csv", "-k", "3", "--selection", "hop-constrained", "--out", "r2.toml"]);
    let size = ok(d, &["union", "r1.toml", "r2.toml", "--out", "u.toml"]);
    let n: u64 = size.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((27..=125).contains(&n), "{size}");
    let listed = ok(d, &["enumerate", "--preset", "toy", "--reduced", "u.toml", "--out", "e.jsonl"]);
    assert_eq!(listed, format!("{n} valid architectures\n"));
    assert_eq!(fs::read_to_string(d.join("e.jsonl")).unwrap().lines().count() as u64, n);

    let built = ok(d, &["build", "--preset", "toy", "--table", "t.csv", "-n", "4", "--out", "b.jsonl"]);
    let scores: Vec<f64> = built.lines().map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(scores.len(), 4);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    // Built architectures can be labeled directly.
    ok(d, &["label", "--oracle", "o.toml", "--archs", "b.jsonl", "--out", "bl.jsonl"]);
}

#[test]
fn srcc_report_has_hops_plus_two_rows() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    train(d, "m.json", &["--hops", "3"]);
    ok(d, &["eval-srcc", "--preset", "toy", "--data", "d.jsonl", "--model", "m.json", "--out", "srcc.json"]);
    ok(d, &["report", "srcc", "csv", "--input", "srcc.json", "--out", "srcc.csv"]);
    let csv = fs::read_to_string(d.join("srcc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "entry,srcc");
    assert_eq!(lines.len() - 1, 3 + 2);
    assert!(lines.last().unwrap().starts_with("prediction,"));
    ok(d, &["report", "srcc", "svg", "--input", "srcc.json", "--out", "srcc.svg"]);
    assert!(fs::read_to_string(d.join("srcc.svg")).unwrap().starts_with("<svg"));
}

fn front_json(points: &[(f64, f64)]) -> String {
    let members: Vec<Value> = points
        .iter()
        .enumerate()
        .map(|(i, &(a, l))| {
            serde_json::json!({ "id": i, "arch": { "stages": [["k3e3"]] }, "objectives": [a, l] })
        })
        .collect();
    serde_json::json!({ "objectives": ["acc", "lat"], "directions": ["maximize", "minimize"], "members": members })
        .to_string()
}

#[test]
fn front_reports() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("f3.json"), front_json(&[(70.0, 10.0), (72.5, 12.0), (75.0, 20.0)])).unwrap();
    fs::write(d.join("f0.json"), front_json(&[])).unwrap();
    ok(d, &["report", "front", "csv", "--input", "f3.json", "--out", "f3.csv"]);
    ok(d, &["report", "front", "csv", "--input", "f0.json", "--out", "f0.csv"]);
    let f3 = fs::read_to_string(d.join("f3.csv")).unwrap();
    assert_eq!(f3.lines().count(), 4);
    assert_eq!(f3.lines().next().unwrap(), "id,arch,acc,lat");
    assert_eq!(fs::read_to_string(d.join("f0.csv")).unwrap(), "id,arch,acc,lat\n");
    ok(d, &["report", "front", "svg", "--input", "f3.json", "--out", "f3.svg"]);
    ok(d, &["report", "front", "svg", "--input", "f0.json", "--out", "f0.svg"]);
    assert_eq!(fs::read_to_string(d.join("f3.svg")).unwrap().matches("<circle").count(), 3);
    fails(d, &["report", "front", "csv", "--input", "f3.csv", "--out", "x.csv"], 3, "validation");
}

#[test]
fn nas_logs_its_budget() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["oracle", "gen", "--preset", "mbv3-like", "--seed", "1", "--out", "o.toml"]);
    ok(d, &["nas", "--oracle", "o.toml", "--out", "log.jsonl", "--front", "front.json"]);
    let log = fs::read_to_string(d.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 250);
    let front: Value = serde_json::from_str(&fs::read_to_string(d.join("front.json")).unwrap()).unwrap();
    let members = front["members"].as_array().unwrap().len();
    let on_front = log.lines().filter(|l| l.contains("\"on_front\":true")).count();
    assert!(members >= 1 && on_front >= members);
    ok(d, &["report", "front", "csv", "--input", "front.json", "--out", "front.csv"]);
    assert_eq!(fs::read_to_string(d.join("front.csv")).unwrap().lines().count(), members + 1);

    fs::write(d.join("nas.toml"), "initial_archs = 10\niters = 2\nevals_per_iter = 5\n").unwrap();
    ok(d, &["nas", "--oracle", "o.toml", "--config", "nas.toml", "--iters", "3", "--out", "l2.jsonl", "--front", "f2.json"]);
    assert_eq!(fs::read_to_string(d.join("l2.jsonl")).unwrap().lines().count(), 25);
}

#[test]
fn ensemble_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    toy_data(d);
    let mut args = vec!["ensemble", "train", "--preset", "toy", "--data", "d.jsonl", "--metric", "score", "--folds", "2", "--seeds", "0,1", "--floor", "3", "--out", "ens.json"];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let ens: Value = serde_json::from_str(&fs::read_to_string(d.join("ens.json")).unwrap()).unwrap();
    assert_eq!(ens["models"].as_array().unwrap().len(), 4);
    ok(d, &["ensemble", "score", "--preset", "toy", "--ensemble", "ens.json", "--mode", "zscore", "--out", "t.csv"]);
    assert_eq!(fs::read_to_string(d.join("t.csv")).unwrap().lines().count(), 61);
}
