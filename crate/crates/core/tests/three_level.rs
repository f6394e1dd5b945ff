//! Three-level attack against the pair tester at n = 256 (slow: a few minutes).

use mtf_core::harness::{self, check, passed, ExperimentConfig};

#[test]
fn three_level_beats_pair_tester() {
    let c = ExperimentConfig::preset("three-level").unwrap();
    assert_eq!(c.trials, 200);
    let report = harness::run(&c).unwrap();
    let lines = check(&report);
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    assert!(passed(&lines));
}
