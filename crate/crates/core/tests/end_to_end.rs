//! End-to-end paths through the public API: build, query, attack, log, replay.

use mtf_core::distance::{exact_distance, secret_edges_exhaustive};
use mtf_core::harness::{self, read_trial_log, replay_row, trial_log, ExperimentConfig, TesterKind, VariantKind};
use mtf_core::{FunctionInstance, MultiplexerSpec, OutcomeLog, Seed};

#[test]
fn instance_survives_json_round_trip() {
    let spec = MultiplexerSpec::new(16, vec![8, 8], 3, Seed::from_u64(4)).unwrap();
    let f = FunctionInstance::sample_no(spec, Seed::from_u64(5)).unwrap();
    let g: FunctionInstance = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
    let mut rng = Seed::from_u64(6).rng();
    for _ in 0..500 {
        let x = mtf_core::hypercube::sample_layer(16, 8, &mut rng);
        assert_eq!(f.eval(&x), g.eval(&x));
        assert_eq!(f.strong_query(&x).unwrap(), g.strong_query(&x).unwrap());
    }
}

#[test]
fn no_instance_distance_is_carried_by_secret_edges() {
    let spec = MultiplexerSpec::new(16, vec![8, 8], 3, Seed::from_u64(11)).unwrap();
    let f = FunctionInstance::sample_no(spec, Seed::from_u64(12)).unwrap();
    let exact = exact_distance(&f, 16).unwrap().value;
    let pairs = secret_edges_exhaustive(&f).unwrap();
    assert_eq!(exact, pairs.len() as f64 / 65536.0);
}

#[test]
fn trial_log_text_replays_row_by_row() {
    let mut c = ExperimentConfig::preset("smoke").unwrap();
    c.trials = 6;
    let report = harness::run(&c).unwrap();
    let text = trial_log(&report).unwrap();
    let (echo, rows) = read_trial_log(&text).unwrap();
    let config_text: String = echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let parsed = ExperimentConfig::parse(&config_text, "smoke").unwrap();
    assert_eq!(rows.len(), report.trials.len());
    for row in &rows {
        assert_eq!(&replay_row(&parsed, row).unwrap(), row);
    }
}

#[test]
fn attack_outcome_log_verifies() {
    let mut c = ExperimentConfig::preset("smoke").unwrap();
    c.variants = vec![VariantKind::No];
    c.testers = vec![TesterKind::General];
    c.trials = 3;
    let report = harness::run(&c).unwrap();
    for row in &report.trials {
        let log = harness::outcome_log(&c, row).unwrap().expect("general attack keeps a ledger");
        let back = OutcomeLog::from_json(&log.to_json()).unwrap();
        assert!(back.verify_replay().unwrap());
        back.outcome.check_facts().unwrap();
    }
}
