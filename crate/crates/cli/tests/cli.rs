use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayes-swarm")).args(args).output().expect("binary runs")
}

fn record(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("record.json")).unwrap()).unwrap()
}

#[test]
fn missing_field_file_is_a_usage_error() {
    let out = cli(&["run", "--field", "/nonexistent/field.toml", "--seeds", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn compare_needs_two_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = cli(&["compare", "--case", "case1", "--variants", "full", "--seeds", "0", "-o", dir]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_overrides_are_rejected() {
    for args in [
        &["run", "--case", "case1", "--m", "0"][..],
        &["run", "--case", "case1", "--beta", "-1"],
        &["run", "--case", "case1", "--seeds", "5..2"],
        &["sweep", "--case", "case2", "--m-list", "5,2"],
    ] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn run_writes_a_reproducible_record() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = cli(&["run", "--case", "case1", "--m", "5", "--seeds", "7", "-o", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let rec = record(&a);
    assert_eq!(rec["seeds"][0]["seed"], 7);
    assert_eq!(rec["seeds"][0]["termination"], "source_found");
    assert!(rec["seeds"][0]["t_achieved"].as_f64().unwrap() < 100.0);
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);
    for f in ["record.json", "seed-7/events.jsonl", "seed-7/trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn preset_output_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let field = tmp.path().join("case1.toml");
    let out = cli(&["preset", "case1", "--output", field.to_str().unwrap()]);
    assert!(out.status.success());
    let (x, y) = (tmp.path().join("x"), tmp.path().join("y"));
    cli(&["run", "--case", "case1", "--seeds", "3", "-o", x.to_str().unwrap()]);
    cli(&["run", "--field", field.to_str().unwrap(), "--seeds", "3", "-o", y.to_str().unwrap()]);
    let (rx, ry) = (record(&x), record(&y));
    assert_eq!(rx["seeds"][0]["t_achieved"], ry["seeds"][0]["t_achieved"]);
}
