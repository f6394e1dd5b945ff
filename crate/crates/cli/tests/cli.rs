//! Drives the `mtf` binary end to end.

use std::path::PathBuf;
use std::process::{Command, Output};

fn mtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtf")).args(args).env_remove("MTF_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mtf-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn sample_fn_and_query_agree_with_instance_file() {
    let path = scratch("inst.json");
    let out = stdout(&mtf(&["sample-fn", "--n", "16", "--variant", "no", "--seed", "3", "--out", path.to_str().unwrap()]));
    assert_eq!(out.trim(), std::fs::read_to_string(&path).unwrap().trim());
    let point = "1010101010101010";
    let direct: serde_json::Value =
        serde_json::from_str(&stdout(&mtf(&["query", "--n", "16", "--variant", "no", "--seed", "3", "--point", point]))).unwrap();
    let from_file: serde_json::Value =
        serde_json::from_str(&stdout(&mtf(&["query", "--instance", path.to_str().unwrap(), "--point", point]))).unwrap();
    assert_eq!(direct, from_file);
    assert_eq!(direct["in_layers"], true);
    assert!(direct["path"]["path"].is_array());
}

#[test]
fn query_outside_layers_reports_eval_only() {
    let v: serde_json::Value = serde_json::from_str(&stdout(&mtf(&["query", "--n", "16", "--point", "1111111111111111"]))).unwrap();
    assert_eq!(v["in_layers"], false);
    assert_eq!(v["implied_value"], true);
}

#[test]
fn attack_emits_jsonl_and_csv() {
    let o = mtf(&["attack", "--algo", "general", "--n", "16", "--trials", "4"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    for l in &lines {
        serde_json::from_str::<serde_json::Value>(l).unwrap();
    }
    let csv = String::from_utf8(o.stderr).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("n,")));
}

#[test]
fn attack_outcome_log_replays() {
    let log = scratch("outcome.json");
    stdout(&mtf(&["attack", "--algo", "general", "--n", "16", "--trials", "1", "--outcome-log", log.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&mtf(&["replay", "--log", log.to_str().unwrap()]))).unwrap();
    assert_eq!(v["replay_consistent"], true);
    assert_eq!(v["facts"], "ok");
}

#[test]
fn distance_methods_report_json() {
    for (variant, method) in [
        ("no", "exact"),
        ("no", "matching"),
        ("no", "sampled"),
        ("no", "fln"),
        ("no", "secret"),
        ("rel-no", "unate"),
    ] {
        let v: serde_json::Value = serde_json::from_str(&stdout(&mtf(&[
            "distance", "--n", "16", "--variant", variant, "--seed", "2", "--method", method, "--trials", "2000",
        ])))
        .unwrap();
        assert_eq!(v["method"], method);
        assert!(v["value"].as_f64().unwrap() >= 0.0, "{method}");
    }
    let exact: serde_json::Value =
        serde_json::from_str(&stdout(&mtf(&["distance", "--n", "16", "--variant", "yes", "--method", "exact"]))).unwrap();
    assert_eq!(exact["value"], 0.0);
}

#[test]
fn experiment_writes_files_and_replays() {
    let log = scratch("smoke.jsonl");
    let csv = scratch("smoke.csv");
    let o = mtf(&[
        "experiment", "--preset", "smoke", "--trials", "3", "--trial-log", log.to_str().unwrap(), "--aggregate",
        csv.to_str().unwrap(), "--check",
    ]);
    stdout(&o);
    assert!(std::fs::read_to_string(&csv).unwrap().contains("reject_rate"));
    let replayed = stdout(&mtf(&["replay", "--log", log.to_str().unwrap()]));
    assert!(replayed.lines().all(|l| l.contains("\"reproduced\":true")));
}

#[test]
fn thread_count_does_not_change_the_trial_log() {
    let mut logs = Vec::new();
    for threads in ["1", "4"] {
        let log = scratch(&format!("threads{threads}.jsonl"));
        let o = Command::new(env!("CARGO_BIN_EXE_mtf"))
            .args(["experiment", "--preset", "smoke", "--trials", "5", "--trial-log", log.to_str().unwrap()])
            .args(["--aggregate", scratch(&format!("threads{threads}.csv")).to_str().unwrap()])
            .env("MTF_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        logs.push(std::fs::read(&log).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn failed_check_exits_two() {
    let o = mtf(&[
        "experiment", "--preset", "yes-monotone-sweep", "--set", "variants=no", "--set", "samples=20000", "--trials", "3",
        "--trial-log", scratch("fail.jsonl").to_str().unwrap(), "--aggregate", scratch("fail.csv").to_str().unwrap(), "--check",
    ]);
    assert_eq!(o.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn print_config_round_trips_through_file() {
    let text = stdout(&mtf(&["rel-experiment", "--preset", "samp", "--trials", "7", "--print-config"]));
    assert!(text.contains("trials=7"));
    let path = scratch("samp.conf");
    std::fs::write(&path, &text).unwrap();
    let again = stdout(&mtf(&["rel-experiment", "--config", path.to_str().unwrap(), "--print-config"]));
    assert_eq!(text, again);
}

#[test]
fn regime_mismatch_is_rejected() {
    let o = mtf(&["experiment", "--preset", "samp", "--print-config"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("rel-experiment"));
}
