//! Acceptance suite: one pass/fail line per criterion. Run with
//! `cargo test -p mtf-core --test acceptance`; pass criterion numbers as
//! arguments to run a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mtf_core::distance::{
    exact_distance, fln_bound, matching_bound, secret_edges_exhaustive, violating_edges_exhaustive, TruthTable,
};
use mtf_core::harness::{self, check, passed, replay_row, trial_log, ExperimentConfig};
use mtf_core::hypercube::sample_layer;
use mtf_core::relerror::{build_sandwich_instance, RelFamily, SandwichParams};
use mtf_core::talagrand::layer_points;
use mtf_core::{BooleanFunction, FunctionInstance, MultiplexerSpec, Outcome, Point, Seed, Variant};
use rand::Rng;

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, u64, fn() -> Verdict);

fn seed(x: u64) -> Seed {
    Seed::from_u64(x)
}

fn preset(name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<harness::AggregateReport, String> {
    let mut c = ExperimentConfig::preset(name).map_err(|e| e.to_string())?;
    edit(&mut c);
    harness::run(&c).map_err(|e| e.to_string())
}

fn checked(report: &harness::AggregateReport) -> Verdict {
    let lines = check(report);
    let detail = lines.iter().map(|l| l.detail.clone()).collect::<Vec<_>>().join("; ");
    if passed(&lines) && !lines.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn middle(n: u32, arities: Vec<u64>, s: u32, variant: &str, i: u64) -> FunctionInstance {
    let spec = MultiplexerSpec::new(n, arities, s, seed(i)).unwrap();
    match variant {
        "yes" => FunctionInstance::new(spec, Variant::Yes, seed(i + 500)).unwrap(),
        "cwx" => FunctionInstance::new(spec, Variant::CwxNo, seed(i + 500)).unwrap(),
        _ => FunctionInstance::sample_no(spec, seed(i + 500)).unwrap(),
    }
}

fn criterion_1() -> Verdict {
    let mut scanned = 0;
    for ell in 1..=2usize {
        for i in 0..20 {
            for arity in [2u64, 3, 4] {
                let f = middle(4, vec![arity; 2 * ell], 2, "yes", i);
                if !violating_edges_exhaustive(&f).is_empty() {
                    return Err(format!("n=4 arity={arity} ell={ell} seed={i} has a violation"));
                }
                scanned += 1;
            }
            let f = middle(9, vec![8; 2 * ell], 3, "yes", i);
            if !violating_edges_exhaustive(&f).is_empty() {
                return Err(format!("n=9 ell={ell} seed={i} has a violation"));
            }
            scanned += 1;
        }
    }
    let r = preset("yes-monotone-sweep", |c| {
        c.n = vec![16, 36, 64];
        c.ell = vec![1, 2];
        c.trials = 20;
        c.samples = 100_000;
    })?;
    let sweep = checked(&r)?;
    Ok(format!("{scanned} exhaustive scans at n=4,9 clean (n=12 skipped: not a perfect square); sampled: {sweep}"))
}

fn criterion_2() -> Verdict {
    checked(&preset("no-distance", |c| {
        c.n = vec![16];
        c.trials = 50;
        c.exact_limit = 16;
    })?)
}

fn all_in_layers(f: &FunctionInstance) -> Vec<Point> {
    let (lo, hi) = f.layer_bounds();
    (lo..=hi.min(f.n())).flat_map(|w| layer_points(f.n(), w)).collect()
}

fn criterion_3() -> Verdict {
    let mut instances = Vec::new();
    for ell in 1..=2usize {
        for i in 0..5 {
            for v in ["yes", "no", "cwx"] {
                instances.push(middle(4, vec![4; 2 * ell], 2, v, i));
                instances.push(middle(9, vec![8; 2 * ell], 3, v, i));
            }
            for n in [8, 12] {
                let p = SandwichParams::desk(n, ell).unwrap();
                for fam in [RelFamily::Yes, RelFamily::No] {
                    instances.push(build_sandwich_instance(&p, fam, seed(i), seed(i + 77)).unwrap());
                }
            }
        }
    }
    let mut points = 0;
    for f in &instances {
        for x in all_in_layers(f) {
            let r = f.strong_query(&x).map_err(|e| e.to_string())?;
            if r.implied_value != f.eval(&x) {
                return Err(format!("mismatch at {x} (n={})", f.n()));
            }
            points += 1;
        }
    }
    let sampled = checked(&preset("oracle-consistency", |c| {
        c.n = vec![64];
        c.trials = 50;
        c.samples = 1000;
    })?)?;
    Ok(format!("{points} exhaustive points on {} instances; sampled n=64: {sampled}", instances.len()))
}

fn criterion_4() -> Verdict {
    let mut sequences = 0;
    let mut ingests = 0;
    for i in 0..100u64 {
        let sandwich = i % 2 == 1;
        let f = if sandwich {
            let p = SandwichParams::desk(16, 1 + (i as usize / 2) % 2).unwrap();
            let fam = if i % 4 == 1 { RelFamily::Yes } else { RelFamily::No };
            build_sandwich_instance(&p, fam, seed(i), seed(i + 1)).unwrap()
        } else {
            let levels = if i % 4 == 0 { 2 } else { 4 };
            middle(16, vec![8; levels], 3, if i % 8 == 0 { "yes" } else { "no" }, i)
        };
        let (lo, hi) = f.layer_bounds();
        let n = f.n();
        let mut rng = seed(i ^ 0xfeed).rng();
        for _ in 0..100 {
            let len = rng.random_range(1..=50);
            let mut o = Outcome::for_instance(&f);
            let mut base = sample_layer(n, (lo + hi) / 2, &mut rng);
            for _ in 0..len {
                let x = if rng.random_bool(0.5) {
                    sample_layer(n, rng.random_range(lo..=hi), &mut rng)
                } else {
                    let y = base.flip_coords(&[rng.random_range(1..=n)]);
                    if f.in_layers(&y) { y } else { base.clone() }
                };
                base = x.clone();
                o.ingest(&x, &f.strong_query(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                o.check_facts().map_err(|e| format!("instance {i}: {e}"))?;
                ingests += 1;
            }
            let replayed = Outcome::replay(&f, o.queries()).map_err(|e| e.to_string())?;
            if replayed.queries() != o.queries() {
                return Err("replay changed the query list".into());
            }
            sequences += 1;
        }
    }
    Ok(format!("{sequences} sequences, {ingests} ingests, both regimes"))
}

fn criterion_5() -> Verdict {
    checked(&preset("good-outcome", |c| {
        c.n = vec![64];
        c.ell = vec![1];
        c.trials = 200;
    })?)
}

fn criterion_6() -> Verdict {
    checked(&preset("attack-general", |c| {
        c.n = vec![256];
        c.ell = vec![1];
        c.trials = 200;
    })?)
}

fn criterion_7() -> Verdict {
    checked(&preset("attack-cwx", |c| {
        c.n = vec![64];
        c.trials = 200;
    })?)
}

fn monotone_tables(n: u32) -> Vec<Vec<bool>> {
    let size = 1usize << n;
    (0..1u64 << size)
        .map(|mask| (0..size).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
        .filter(|t| (0..size).all(|x| (0..n).all(|b| x >> b & 1 == 1 || !t[x] || t[x | 1 << b])))
        .collect()
}

fn criterion_8() -> Verdict {
    let mut rng = seed(8).rng();
    let mono4 = monotone_tables(4);
    if mono4.len() != 168 {
        return Err(format!("{} monotone functions at n=4", mono4.len()));
    }
    let mut compared = 0;
    for n in 1..=4u32 {
        let tables = monotone_tables(n);
        for _ in 0..100 {
            let bits: Vec<bool> = (0..1usize << n).map(|_| rng.random_bool(0.5)).collect();
            let brute = tables.iter().map(|t| t.iter().zip(&bits).filter(|(a, b)| a != b).count()).min().unwrap();
            let f = TruthTable::new(n, bits).unwrap();
            let exact = exact_distance(&f, 16).map_err(|e| e.to_string())?.value;
            if (exact - brute as f64 / (1u64 << n) as f64).abs() > 1e-12 {
                return Err(format!("n={n}: exact {exact} vs enumeration {brute}"));
            }
            compared += 1;
        }
    }
    let mut suite = 0;
    let mut check_pair = |f: &dyn BooleanFunction, pairs_bound: f64| -> Result<(), String> {
        let exact = exact_distance(f, 16).map_err(|e| e.to_string())?.value;
        if pairs_bound > exact + 1e-12 {
            return Err(format!("disjoint-pairs bound {pairs_bound} exceeds exact {exact} at n={}", f.n()));
        }
        suite += 1;
        Ok(())
    };
    for n in 1..=3u32 {
        for mask in 0..1u64 << (1 << n) {
            let f = TruthTable::new(n, (0..1usize << n).map(|i| mask >> i & 1 == 1).collect()).unwrap();
            check_pair(&f, matching_bound(&f).map_err(|e| e.to_string())?.value)?;
        }
    }
    for i in 0..20 {
        for v in ["yes", "no", "cwx"] {
            for f in [middle(4, vec![4; 2], 2, v, i), middle(9, vec![8; 2], 3, v, i), middle(9, vec![8; 4], 3, v, i)] {
                check_pair(&f, matching_bound(&f).map_err(|e| e.to_string())?.value)?;
                if v == "no" {
                    let pairs = secret_edges_exhaustive(&f).map_err(|e| e.to_string())?;
                    check_pair(&f, fln_bound(&f, &pairs).map_err(|e| e.to_string())?.value)?;
                }
            }
        }
        let p = SandwichParams::with_arities(8, 1, 4, 16, 2).unwrap();
        let f = build_sandwich_instance(&p, RelFamily::No, seed(i), seed(i + 3)).unwrap();
        check_pair(&f, matching_bound(&f).map_err(|e| e.to_string())?.value)?;
        for n in [6u32, 8, 10] {
            let bits: Vec<bool> = (0..1usize << n).map(|_| rng.random_bool(0.5)).collect();
            let f = TruthTable::new(n, bits).unwrap();
            check_pair(&f, matching_bound(&f).map_err(|e| e.to_string())?.value)?;
        }
    }
    Ok(format!("{compared} random functions match enumeration; pairs bound <= exact on {suite} functions (n <= 10)"))
}

fn criterion_9() -> Verdict {
    let rel_yes = checked(&preset("rel-yes-sweep", |c| {
        c.n = vec![8];
        c.term_arity = Some(4);
        c.clause_arity = Some(16);
        c.literal_size = Some(2);
        c.trials = 20;
    })?)?;
    let rel_no = checked(&preset("rel-no-distance", |c| {
        c.n = vec![16];
        c.trials = 50;
    })?)?;
    let samp = checked(&preset("samp", |c| {
        c.n = vec![16];
        c.trials = 50;
        c.samples = 1000;
    })?)?;
    Ok(format!("rel-yes n=8: {rel_yes}; rel-no n=16: {rel_no}; SAMP: {samp}"))
}

fn criterion_10() -> Verdict {
    let mut compared = Vec::new();
    for (name, trials) in [("smoke", 20), ("attack-cwx", 30), ("samp", 10), ("rel-smoke", 10)] {
        let mut logs = Vec::new();
        for threads in [1, 8] {
            let r = preset(name, |c| {
                c.trials = trials;
                c.threads = threads;
            })?;
            logs.push((trial_log(&r).map_err(|e| e.to_string())?, r));
        }
        if logs[0].0 != logs[1].0 {
            return Err(format!("{name}: trial logs differ between 1 and 8 threads"));
        }
        let (_, r) = &logs[0];
        for row in r.trials.iter().step_by(7) {
            if &replay_row(&r.config, row).map_err(|e| e.to_string())? != row {
                return Err(format!("{name}: row {} does not replay", row.trial));
            }
        }
        compared.push(format!("{name} ({} bytes)", logs[0].0.len()));
    }
    Ok(format!("byte-identical at 1 and 8 threads: {}", compared.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "Yes-monotonicity", 300, criterion_1),
        (2, "No-distance", 1200, criterion_2),
        (3, "Oracle consistency", 120, criterion_3),
        (4, "Outcome facts", 300, criterion_4),
        (5, "Good-outcome prevalence", 600, criterion_5),
        (6, "Attack success", 1800, criterion_6),
        (7, "CWX skip attack", 900, criterion_7),
        (8, "Distance-oracle correctness", 300, criterion_8),
        (9, "Relative-error suite", 900, criterion_9),
        (10, "Determinism & replay", 120, criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (k, name, limit, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let verdict = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let (ok, detail) = match verdict {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit}s limit")),
            Err(d) => (false, d),
        };
        failures += !ok as u32;
        println!(
            "{} criterion {k:>2} {name}: {detail} [{:.1}s / {limit}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
