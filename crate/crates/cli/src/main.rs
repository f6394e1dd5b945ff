//! `mtf`: sample instances, query the strong oracle, run attacks, compute
//! distances, replay logs and run experiment presets.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mtf_core::distance::{
    exact_distance, fln_bound, matching_bound, sampled_edge_bound, secret_edge_scan, secret_edges_exhaustive,
    unate_bound, DistanceEstimate,
};
use mtf_core::harness::{
    self, aggregate_csv, check, instance_seeds, passed, read_trial_log, replay_row, trial_log, trial_seed,
    BudgetRule, ExperimentConfig, ParamSet, Shape, TesterKind, VariantKind, THREADS_ENV,
};
use mtf_core::outcome::{GoodParams, LogBase, DEFAULT_TAU};
use mtf_core::{FunctionInstance, OutcomeLog, Point, Regime, Seed};

#[derive(Parser)]
#[command(name = "mtf", version, about = "Multilevel Talagrand function simulator and monotonicity attacks")]
struct Cli {
    /// Worker threads for trial-parallel commands (0 = one per core).
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print an instance descriptor as JSON.
    SampleFn {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Also write the descriptor to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the strong oracle about one point.
    Query {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Point as a 0/1 string, coordinate 1 leftmost.
        #[arg(long)]
        point: String,
    },
    /// Run a tester on fresh instances: JSON lines per trial, CSV aggregate.
    Attack(AttackArgs),
    /// Distance to monotonicity (or unateness) of one instance.
    Distance(DistanceArgs),
    /// Re-check an outcome log, or re-execute rows of a trial log.
    Replay(ReplayArgs),
    /// Run a standard-regime experiment preset.
    Experiment(ExperimentArgs),
    /// Run a relative-error (two-layer) experiment preset.
    RelExperiment(ExperimentArgs),
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Instance JSON written by `sample-fn`; overrides the generator flags.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    n: u32,
    /// Tree levels: even for the standard construction, 3 for the three-level host.
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// yes, no, cwx-no, rel-yes or rel-no.
    #[arg(long, default_value = "yes")]
    variant: VariantKind,
    /// Master seed; the instance equals trial 0 of an experiment with this seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    term_arity: Option<u64>,
    #[arg(long)]
    clause_arity: Option<u64>,
    #[arg(long)]
    literal_size: Option<u32>,
    /// desk (scaled-down) or paper (full-size) parameters.
    #[arg(long, default_value = "desk")]
    params: ParamSet,
}

impl InstanceArgs {
    fn config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::base("cli");
        c.regime = self.variant.regime();
        c.n = vec![self.n];
        c.ell = vec![(self.levels / 2).max(1)];
        c.variants = vec![self.variant];
        c.shape = if self.levels % 2 == 1 { Shape::ThreeLevel } else { Shape::Even };
        c.term_arity = self.term_arity;
        c.clause_arity = self.clause_arity;
        c.literal_size = self.literal_size;
        c.params = self.params;
        c.seed = self.seed;
        c
    }

    fn build(&self) -> Result<FunctionInstance> {
        if let Some(path) = &self.instance {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        if self.levels == 3 && self.variant.regime() == Regime::Sandwich {
            bail!("three-level hosts exist only in the middle regime");
        }
        if self.levels != 3 && self.levels % 2 == 1 {
            bail!("levels must be even, or 3 for the three-level host");
        }
        let c = self.config();
        let ell = c.ell[0];
        let (spec_seed, leaf_seed) = instance_seeds(&trial_seed(&c.master_seed(), 0), self.n, ell);
        Ok(c.build_instance(self.n, ell, self.variant, spec_seed, leaf_seed)?)
    }
}

#[derive(Args)]
struct AttackArgs {
    /// three-level, general, cwx, edge or pair.
    #[arg(long)]
    algo: TesterKind,
    #[arg(long, default_value_t = 64)]
    n: u32,
    /// Tree levels; defaults to 3 for three-level and cwx, else 2.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    /// auto, formula or a query count.
    #[arg(long, default_value = "auto")]
    budget: BudgetRule,
    /// Instance family; defaults to cwx-no for cwx, else no.
    #[arg(long)]
    variant: Option<VariantKind>,
    #[arg(long, default_value = "desk")]
    params: ParamSet,
    /// Trial log path (default: stdout).
    #[arg(long)]
    trial_log: Option<PathBuf>,
    /// Aggregate CSV path (default: stderr).
    #[arg(long)]
    aggregate: Option<PathBuf>,
    /// Write the outcome ledger of trial 0 to this file.
    #[arg(long)]
    outcome_log: Option<PathBuf>,
}

#[derive(Args)]
struct DistanceArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// exact, matching, sampled, secret, fln or unate.
    #[arg(long, default_value = "exact")]
    method: String,
    /// Samples for the sampling methods.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Seed of the estimator's randomness.
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Direction for `unate` (default: the secret, else 1).
    #[arg(long)]
    coordinate: Option<u32>,
    #[arg(long, default_value_t = 16)]
    exact_limit: u32,
}

#[derive(Args)]
struct ReplayArgs {
    /// Outcome log (from `attack --outcome-log`) or trial log (JSON lines).
    #[arg(long)]
    log: PathBuf,
    /// Trial log row to re-execute (default: all rows).
    #[arg(long)]
    row: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Slack constant of the good-outcome predicate.
    #[arg(long, default_value_t = 100.0)]
    c: f64,
    /// Use natural logarithms in the good-outcome predicate.
    #[arg(long)]
    natural_log: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file; its `preset` line selects the starting point.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value override, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated n grid.
    #[arg(long)]
    n: Option<String>,
    /// Trial log path (default: results/<preset>.trials.jsonl).
    #[arg(long)]
    trial_log: Option<PathBuf>,
    /// Aggregate CSV path (default: results/<preset>.csv).
    #[arg(long)]
    aggregate: Option<PathBuf>,
    /// Add wall-clock seconds to the aggregate.
    #[arg(long)]
    timing: bool,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
    /// Evaluate the preset's claim; exit 2 when it fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::SampleFn { instance, out } => {
            let f = instance.build()?;
            let text = serde_json::to_string_pretty(&f)?;
            if let Some(path) = out {
                harness::write_file(&path, text.as_bytes())?;
            }
            println!("{text}");
        }
        Command::Query { instance, point } => {
            let f = instance.build()?;
            let x: Point = point.parse()?;
            if x.n() != f.n() {
                bail!("point has {} coordinates, instance has n = {}", x.n(), f.n());
            }
            let record = match f.strong_query(&x) {
                Ok(r) => json!({
                    "point": x,
                    "weight": x.weight(),
                    "in_layers": true,
                    "path": r.path,
                    "case": r.case,
                    "implied_value": r.implied_value,
                }),
                Err(mtf_core::Error::OutOfLayer { .. }) => json!({
                    "point": x,
                    "weight": x.weight(),
                    "in_layers": false,
                    "implied_value": f.eval(&x),
                }),
                Err(e) => return Err(e.into()),
            };
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Attack(a) => attack(a, cli.threads)?,
        Command::Distance(d) => distance(d)?,
        Command::Replay(r) => replay(r, cli.threads)?,
        Command::Experiment(e) => return experiment(e, cli.threads, false),
        Command::RelExperiment(e) => return experiment(e, cli.threads, true),
    }
    Ok(ExitCode::SUCCESS)
}

fn attack(a: AttackArgs, threads: usize) -> Result<()> {
    let three = matches!(a.algo, TesterKind::ThreeLevel | TesterKind::Cwx);
    let levels = a.levels.unwrap_or(if three { 3 } else { 2 });
    let variant = a.variant.unwrap_or(if a.algo == TesterKind::Cwx { VariantKind::CwxNo } else { VariantKind::No });
    if three && levels != 3 {
        bail!("--algo {} runs on three-level instances", a.algo);
    }
    let mut c = ExperimentConfig::base("attack");
    c.regime = variant.regime();
    c.n = vec![a.n];
    c.ell = vec![(levels / 2).max(1)];
    c.variants = vec![variant];
    c.testers = vec![a.algo];
    c.shape = if levels == 3 { Shape::ThreeLevel } else { Shape::Even };
    c.budget = a.budget;
    c.trials = a.trials;
    c.seed = a.seed;
    c.params = a.params;
    c.threads = threads;
    c.trial_log = a.trial_log;
    c.aggregate = a.aggregate;
    let report = harness::run(&c)?;
    if c.trial_log.is_none() {
        print!("{}", trial_log(&report)?);
    }
    if c.aggregate.is_none() {
        eprint!("{}", aggregate_csv(&report)?);
    }
    if let Some(path) = a.outcome_log {
        let row = report.trials.first().context("no trials ran")?;
        let log = harness::outcome_log(&c, row)?.context("this tester keeps no outcome ledger")?;
        harness::write_file(&path, log.to_json().as_bytes())?;
    }
    Ok(())
}

fn distance(d: DistanceArgs) -> Result<()> {
    let f = d.instance.build()?;
    let mut rng = Seed::from_u64(d.rng_seed).rng();
    let n = f.n();
    let mut conditions = vec![format!("n = {n}"), format!("variant = {}", f.variant().name())];
    let (estimate, extra): (DistanceEstimate, serde_json::Value) = match d.method.as_str() {
        "exact" => {
            conditions.push(format!("n <= exact limit {}", d.exact_limit));
            (exact_distance(&f, d.exact_limit)?, json!(null))
        }
        "matching" => {
            conditions.push("n <= 16".into());
            (matching_bound(&f)?, json!(null))
        }
        "sampled" => {
            conditions.push(format!("{} uniform edges, greedy disjoint violations", d.trials));
            (sampled_edge_bound(&f, d.trials, &mut rng)?, json!(null))
        }
        "fln" => {
            conditions.push("all violating edges along the secret; vertex-disjoint".into());
            let pairs = secret_edges_exhaustive(&f)?;
            let count = pairs.len();
            (fln_bound(&f, &pairs)?, json!({ "pairs": count }))
        }
        "secret" => {
            conditions.push(format!("{} sampled secret-direction edges in the layers", d.trials));
            let scan = secret_edge_scan(&f, d.trials, &mut rng)?;
            let extra = json!({
                "hits": scan.hits,
                "same_leaf_rate": scan.same_leaf_rate,
                "anti_given_same_leaf_rate": scan.anti_given_same_leaf_rate,
            });
            (scan.estimate, extra)
        }
        "unate" => {
            let i = d.coordinate.or(f.secret_of()).unwrap_or(1);
            conditions.push(format!("direction {i}; relative to |f^-1(1)|"));
            let u = unate_bound(&f, i, d.trials, &mut rng)?;
            let extra = json!({
                "coordinate": i,
                "monotone_edges": u.monotone_edges,
                "anti_monotone_edges": u.anti_monotone_edges,
                "ones": u.ones,
            });
            (u.bound, extra)
        }
        m => bail!("unknown method '{m}' (expected exact, matching, sampled, fln, secret or unate)"),
    };
    let record = json!({
        "method": d.method,
        "value": estimate.value,
        "kind": estimate.kind,
        "ci": estimate.ci,
        "sample_size": estimate.sample_size,
        "conditions": conditions,
        "details": extra,
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn replay(r: ReplayArgs, threads: usize) -> Result<()> {
    let text = std::fs::read_to_string(&r.log).with_context(|| format!("reading {}", r.log.display()))?;
    let first: serde_json::Value = text
        .lines()
        .next()
        .and_then(|l| serde_json::from_str(l).ok())
        .unwrap_or(serde_json::Value::Null);
    if first.get("config").is_some() {
        return replay_trials(&text, &r, threads);
    }
    let log = OutcomeLog::from_json(&text)?;
    let o = &log.outcome;
    let params = GoodParams { c: r.c, log_base: if r.natural_log { LogBase::E } else { LogBase::Two } };
    let danger = o.danger();
    let record = json!({
        "queries": o.queries().len(),
        "duplicates": o.duplicates(),
        "replay_consistent": log.verify_replay()?,
        "facts": o.check_facts().err().unwrap_or_else(|| "ok".into()),
        "dangerous_coordinates": danger.global,
        "danger_fraction": danger.global_fraction(o.n()),
        "safe": o.is_safe(r.tau),
        "good": o.is_good(params),
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn replay_trials(text: &str, r: &ReplayArgs, threads: usize) -> Result<()> {
    let (echo, rows) = read_trial_log(text)?;
    let config_text: String = echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let mut config = ExperimentConfig::parse(&config_text, "smoke")?;
    config.threads = threads;
    let picked: Vec<usize> = match r.row {
        Some(k) if k < rows.len() => vec![k],
        Some(k) => bail!("row {k} out of range ({} rows)", rows.len()),
        None => (0..rows.len()).collect(),
    };
    let mut mismatched = 0;
    for &k in &picked {
        let again = replay_row(&config, &rows[k])?;
        let same = again == rows[k];
        mismatched += !same as usize;
        println!("{}", json!({ "row": k, "reproduced": same, "rejected": again.rejected }));
    }
    if mismatched > 0 {
        bail!("{mismatched} of {} rows did not reproduce", picked.len());
    }
    Ok(())
}

fn experiment(e: ExperimentArgs, threads: usize, rel: bool) -> Result<ExitCode> {
    let fallback = if rel { "rel-smoke" } else { "smoke" };
    let mut c = match (&e.config, &e.preset) {
        (Some(path), Some(preset)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c = ExperimentConfig::preset(preset)?;
            c.apply_text(&text)?;
            c
        }
        (Some(path), None) => ExperimentConfig::from_file(path, fallback)?,
        (None, preset) => ExperimentConfig::preset(preset.as_deref().unwrap_or(fallback))?,
    };
    if rel != (c.regime == Regime::Sandwich) {
        let which = if rel { "experiment" } else { "rel-experiment" };
        bail!("preset '{}' runs under `{which}`", c.preset);
    }
    for pair in &e.set {
        c.set_pair(pair)?;
    }
    if let Some(t) = e.trials {
        c.trials = t;
    }
    if let Some(s) = e.seed {
        c.seed = s;
    }
    if let Some(n) = &e.n {
        c.set("n", n)?;
    }
    c.timing |= e.timing;
    c.threads = threads;
    if e.trial_log.is_some() || c.trial_log.is_none() {
        c.trial_log = Some(e.trial_log.clone().unwrap_or_else(|| default_path(&c.preset, "trials.jsonl")));
    }
    if e.aggregate.is_some() || c.aggregate.is_none() {
        c.aggregate = Some(e.aggregate.clone().unwrap_or_else(|| default_path(&c.preset, "csv")));
    }
    if e.print_config {
        print!("{}", c.to_text());
        return Ok(ExitCode::SUCCESS);
    }
    let report = harness::run(&c)?;
    print!("{}", aggregate_csv(&report)?);
    let lines = check(&report);
    let mut err = std::io::stderr().lock();
    for l in &lines {
        writeln!(err, "{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail)?;
    }
    writeln!(
        err,
        "{} trials in {:.1}s; trial log {}; aggregate {}",
        report.trials.len(),
        report.wall_seconds,
        show(&c.trial_log),
        show(&c.aggregate)
    )?;
    if e.check && !passed(&lines) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn default_path(preset: &str, ext: &str) -> PathBuf {
    Path::new("results").join(format!("{preset}.{ext}"))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string())
}
