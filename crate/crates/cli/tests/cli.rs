use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qhedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qhedge")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn as_f64(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// Writes the embedded example models into a temporary directory.
fn models() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().to_path_buf();
    let out = qhedge(&["examples", "--emit", path.to_str().unwrap()]);
    assert!(out.status.success());
    (dir, path)
}

fn file(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_example() {
    let (_tmp, dir) = models();
    let out = qhedge(&["validate", &file(&dir, "ex1.lattice")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "OK");
    let out = qhedge(&[
        "validate",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--policy",
        &file(&dir, "rn_opt.policy"),
        "--measure",
        &file(&dir, "rn.measure"),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validate_reports_every_violation() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.lattice");
    fs::write(
        &path,
        r#"{"stages": 2, "discounts": [1], "nodes": [
            {"id": 0, "stage": 0, "price": 3, "edges": [{"to": 1, "p": 0.5}, {"to": 2, "p": 0.4}]},
            {"id": 1, "stage": 1, "price": 2},
            {"id": 2, "stage": 1, "price": -4},
            {"id": 9, "stage": 1, "price": 1}
        ]}"#,
    )
    .unwrap();
    let out = qhedge(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("probabilities do not sum to 1"), "{text}");
    assert!(text.contains("price < 0"), "{text}");
    assert!(text.contains("unreachable node"), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qhedge(&["optimize", "--bogus"]).status.code(), Some(2));
    assert_eq!(qhedge(&["validate", "/nonexistent/ex1.lattice"]).status.code(), Some(2));
    let (_tmp, dir) = models();
    let out = qhedge(&["optimize", "--method", "rn", "--model", &file(&dir, "ex1.lattice"), "--payoff", &file(&dir, "call3.payoff")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_measure_exits_with_one() {
    let (_tmp, dir) = models();
    let measure = dir.join("bad.measure");
    fs::write(&measure, r#"{"edges": [{"from": 0, "to": 1, "p": 0.5}, {"from": 0, "to": 2, "p": 0.5}, {"from": 0, "to": 3, "p": 0}]}"#)
        .unwrap();
    let out = qhedge(&[
        "optimize",
        "--method",
        "rn",
        "--measure",
        measure.to_str().unwrap(),
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-positive probability"));
}

#[test]
fn naive_optimization_of_example_one() {
    let (_tmp, dir) = models();
    let out = qhedge(&["--json", "optimize", "--method", "vo", "--model", &file(&dir, "ex1.lattice"), "--payoff", &file(&dir, "call3.payoff")]);
    assert!(out.status.success());
    let doc = json(&out);
    assert_eq!(doc["policy"]["exercise"], serde_json::json!([2]));
    assert!((as_f64(&doc["value"]) - 1.5286).abs() < 5e-4);
    assert_eq!(doc["policies_evaluated"], 9);
}

#[test]
fn consistency_check_flags_the_top_node() {
    let (_tmp, dir) = models();
    let out = qhedge(&[
        "optimize",
        "--check-consistency",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
    ]);
    assert!(stdout(&out).contains("time inconsistent at nodes [3]"));
}

#[test]
fn bounds_of_the_rn_policy() {
    let (_tmp, dir) = models();
    let out = qhedge(&[
        "--json",
        "bounds",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--policy",
        &file(&dir, "rn_opt.policy"),
        "--value",
        "0.4777",
        "--value",
        "0.6",
    ]);
    assert!(out.status.success());
    let doc = json(&out);
    assert!((as_f64(&doc["lo"]) - 17.0 / 30.0).abs() < 1e-12);
    assert!((as_f64(&doc["hi"]) - 13.0 / 21.0).abs() < 1e-12);
    assert_eq!(doc["open_lo"], true);
    assert_eq!(doc["membership"][0]["inside"], false);
    assert_eq!(doc["membership"][1]["inside"], true);
}

#[test]
fn exact_mode_prints_fractions() {
    let (_tmp, dir) = models();
    let out = qhedge(&[
        "--exact",
        "bounds",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call7.payoff"),
        "--policy",
        &file(&dir, "at16.policy"),
    ]);
    assert!(stdout(&out).contains("interval (0, 3/7"), "{}", stdout(&out));
    let out = qhedge(&[
        "--exact",
        "hedge",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--policy",
        &file(&dir, "rn_opt.policy"),
        "--anchor",
        "rn",
        "--measure",
        &file(&dir, "rn.measure"),
    ]);
    let text = stdout(&out);
    assert!(text.contains("b0 = 4787/10020"), "{text}");
    assert!(text.contains("J0(83/140"), "{text}");
}

#[test]
fn emitted_policies_round_trip() {
    let (_tmp, dir) = models();
    let policy = file(&dir, "tc.policy");
    let out = qhedge(&[
        "--json",
        "optimize",
        "--method",
        "tc",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--out",
        &policy,
    ]);
    let optimized = json(&out);
    let out = qhedge(&["--json", "hedge", "--model", &file(&dir, "ex1.lattice"), "--payoff", &file(&dir, "call3.payoff"), "--policy", &policy]);
    let hedged = json(&out);
    assert_eq!(hedged["policy"], optimized["policy"]);
    assert_eq!(hedged["production_cost"], optimized["value"]);
}

#[test]
fn simulation_is_reproducible_and_writes_csv() {
    let (_tmp, dir) = models();
    let csv = file(&dir, "paths.csv");
    let args = [
        "--json",
        "simulate",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--policy",
        &file(&dir, "rn_opt.policy"),
        "--paths",
        "20000",
        "--seed",
        "11",
    ];
    let first = json(&qhedge(&args));
    let mut with_csv = args.to_vec();
    with_csv.extend(["--out", &csv]);
    let second = json(&qhedge(&with_csv));
    assert_eq!(first, second);
    assert_eq!(first["pass"], true);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,iota,cashflow,terminal_wealth,error"));
    assert_eq!(lines.count(), 20000);
}

#[test]
fn anchored_simulation_uses_the_rn_value() {
    let (_tmp, dir) = models();
    let out = qhedge(&[
        "--json",
        "simulate",
        "--model",
        &file(&dir, "ex1.lattice"),
        "--payoff",
        &file(&dir, "call3.payoff"),
        "--policy",
        &file(&dir, "rn_opt.policy"),
        "--anchor",
        "rn",
        "--measure",
        &file(&dir, "rn.measure"),
        "--paths",
        "50000",
    ]);
    let doc = json(&out);
    assert!((as_f64(&doc["initial_capital"]) - 83.0 / 140.0).abs() < 1e-12);
    assert!((as_f64(&doc["predicted"]) - 0.0043629496).abs() < 1e-9);
}

#[test]
fn examples_table_passes() {
    let out = qhedge(&["examples"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("all rows pass"));
}
