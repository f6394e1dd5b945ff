//! Experiment runner: key=value configs, presets, seeded parallel trials,
//! JSON-lines trial logs and CSV aggregates, and preset checks.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_cwx_skip, attack_general, attack_three_level, edge_tester, pair_tester, three_level_spec, AttackParams,
    AttackResult, Verdict, WitnessSource,
};
use crate::distance::{exact_distance_with_witness, secret_edges_exhaustive, secret_edge_scan, violating_edges_exhaustive};
use crate::error::{Error, Result};
use crate::hypercube::{isqrt, sample_layer, Point};
use crate::multiplexer::MultiplexerSpec;
use crate::outcome::{GoodParams, OutcomeLog, DEFAULT_TAU};
use crate::prf::Seed;
use crate::relerror::{rel_distance_report, rel_query_budget, spec_disclosure, ArityDisclosure, SandwichParams};
use crate::stats::{binomial, median, Rate};
use crate::talagrand::{FunctionInstance, Regime, Variant};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "MTF_THREADS";

/// Query budget `n^{1/2 - 1/(4ℓ+2)} / log2 n`, rounded half up, at least 1.
pub fn budget(n: u32, ell: usize) -> u64 {
    if n < 2 {
        return 1;
    }
    let n = n as f64;
    let q = n.powf(0.5 - 1.0 / (4 * ell + 2) as f64) / n.log2();
    (q.round() as u64).max(1)
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($var:ident => $s:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $var),*
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),*];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$var => $s),*
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($name::$var),)*
                    _ => Err(Error::Parse(format!(
                        "unknown {} '{}' (expected one of: {})",
                        stringify!($name),
                        s,
                        [$($s),*].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

keyword_enum!(
    /// What one trial measures.
    Task {
        Attack => "attack",
        EdgeScan => "edge-scan",
        EdgeExhaustive => "edge-exhaustive",
        Consistency => "consistency",
        Distance => "distance",
        RelDistance => "rel-distance",
        Samp => "samp",
    }
);

keyword_enum!(
    /// Instance family.
    VariantKind {
        Yes => "yes",
        No => "no",
        CwxNo => "cwx-no",
        RelYes => "rel-yes",
        RelNo => "rel-no",
    }
);

keyword_enum!(
    /// Tester run by attack trials.
    TesterKind {
        General => "general",
        ThreeLevel => "three-level",
        Cwx => "cwx",
        Edge => "edge",
        Pair => "pair",
        AlwaysAccept => "always-accept",
    }
);

keyword_enum!(
    /// Attack schedule constants.
    ParamSet {
        Desk => "desk",
        Paper => "paper",
    }
);

keyword_enum!(
    /// Tree shape for middle-regime instances; `auto` picks three levels when a
    /// three-level or cwx tester is selected.
    Shape {
        Auto => "auto",
        Even => "even",
        ThreeLevel => "three-level",
    }
);

impl VariantKind {
    pub fn regime(self) -> Regime {
        match self {
            VariantKind::RelYes | VariantKind::RelNo => Regime::Sandwich,
            _ => Regime::Middle,
        }
    }
}

impl TesterKind {
    /// Adaptive attacks, as opposed to the one-shot baselines.
    pub fn is_algorithmic(self) -> bool {
        matches!(self, TesterKind::General | TesterKind::ThreeLevel | TesterKind::Cwx)
    }
}

/// Per-tester query budget rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetRule {
    /// Attacks use their own schedule cap; baselines match the queries the first
    /// attack spent in the same trial, or the formula budget when no attack ran.
    Auto,
    /// The formula budget for the regime.
    Formula,
    Fixed(u64),
}

impl fmt::Display for BudgetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetRule::Auto => f.write_str("auto"),
            BudgetRule::Formula => f.write_str("formula"),
            BudgetRule::Fixed(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for BudgetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(BudgetRule::Auto),
            "formula" => Ok(BudgetRule::Formula),
            _ => s.parse().map(BudgetRule::Fixed).map_err(|_| Error::Parse(format!("bad budget '{s}'"))),
        }
    }
}

fn parse_regime(s: &str) -> Result<Regime> {
    match s {
        "middle" => Ok(Regime::Middle),
        "sandwich" => Ok(Regime::Sandwich),
        _ => Err(Error::Parse(format!("unknown regime '{s}' (expected middle or sandwich)"))),
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::Parse(format!("bad list item '{t}'"))))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad value '{s}' for {key}")))
}

fn parse_opt<T: FromStr>(key: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() || s == "none" {
        Ok(None)
    } else {
        parse_value(key, s).map(Some)
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), ToString::to_string)
}

/// Everything needed to reproduce an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub regime: Regime,
    pub task: Task,
    pub n: Vec<u32>,
    pub ell: Vec<usize>,
    pub variants: Vec<VariantKind>,
    pub testers: Vec<TesterKind>,
    pub params: ParamSet,
    pub shape: Shape,
    pub budget: BudgetRule,
    pub trials: u64,
    /// Sample count per trial for sampling tasks.
    pub samples: u64,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub term_arity: Option<u64>,
    pub clause_arity: Option<u64>,
    pub literal_size: Option<u32>,
    pub exact_limit: u32,
    /// Adds per-group wall-clock seconds to the aggregate.
    pub timing: bool,
    pub trial_log: Option<PathBuf>,
    pub aggregate: Option<PathBuf>,
}

/// Preset names accepted by `experiment` (middle regime).
pub const PRESETS: &[&str] = &[
    "smoke",
    "yes-monotone-sweep",
    "oracle-consistency",
    "no-distance",
    "good-outcome",
    "attack-general",
    "attack-cwx",
    "three-level",
    "distinguish",
];

/// Preset names accepted by `rel-experiment` (sandwich regime).
pub const REL_PRESETS: &[&str] = &["rel-smoke", "rel-yes-sweep", "rel-no-distance", "samp"];

impl ExperimentConfig {
    /// Defaults for an ad hoc experiment named `preset`.
    pub fn base(preset: &str) -> Self {
        ExperimentConfig {
            preset: preset.into(),
            regime: Regime::Middle,
            task: Task::Attack,
            n: vec![16],
            ell: vec![1],
            variants: vec![VariantKind::Yes, VariantKind::No],
            testers: vec![TesterKind::General],
            params: ParamSet::Desk,
            shape: Shape::Auto,
            budget: BudgetRule::Auto,
            trials: 20,
            samples: 1000,
            seed: 1,
            threads: 0,
            term_arity: None,
            clause_arity: None,
            literal_size: None,
            exact_limit: 16,
            timing: false,
            trial_log: None,
            aggregate: None,
        }
    }

    /// A named preset.
    pub fn preset(name: &str) -> Result<Self> {
        use TesterKind::*;
        use VariantKind::*;
        let mut c = Self::base(name);
        match name {
            "smoke" => {
                c.testers = vec![General, Edge, Pair];
            }
            "yes-monotone-sweep" => {
                c.task = Task::EdgeScan;
                c.variants = vec![Yes];
                c.samples = 100_000;
            }
            "oracle-consistency" => {
                c.task = Task::Consistency;
                c.n = vec![64];
                c.variants = vec![Yes, No];
                c.trials = 50;
                c.samples = 1000;
            }
            "no-distance" => {
                c.task = Task::Distance;
                c.variants = vec![No];
                c.trials = 50;
            }
            "good-outcome" => {
                c.n = vec![64];
                c.variants = vec![Yes];
                c.budget = BudgetRule::Formula;
                c.trials = 200;
            }
            "attack-general" => {
                c.n = vec![256];
                c.variants = vec![No];
                c.testers = vec![General, Edge];
                c.trials = 200;
            }
            "attack-cwx" => {
                c.n = vec![64];
                c.variants = vec![CwxNo];
                c.testers = vec![Cwx];
                c.trials = 200;
            }
            "three-level" => {
                c.n = vec![256];
                c.variants = vec![No];
                c.testers = vec![ThreeLevel, Pair];
                c.trials = 200;
            }
            "distinguish" => {
                c.n = vec![64];
                c.testers = vec![General, Edge, AlwaysAccept];
                c.trials = 100;
            }
            "rel-smoke" => {
                c.regime = Regime::Sandwich;
                c.variants = vec![RelYes, RelNo];
                c.testers = vec![Edge, Pair];
            }
            "rel-yes-sweep" => {
                c.regime = Regime::Sandwich;
                c.task = Task::EdgeExhaustive;
                c.n = vec![8];
                c.variants = vec![RelYes];
                c.term_arity = Some(4);
                c.clause_arity = Some(16);
                c.literal_size = Some(2);
            }
            "rel-no-distance" => {
                c.regime = Regime::Sandwich;
                c.task = Task::RelDistance;
                c.variants = vec![RelNo];
                c.trials = 50;
                c.samples = 2000;
            }
            "samp" => {
                c.regime = Regime::Sandwich;
                c.task = Task::Samp;
                c.variants = vec![RelYes, RelNo];
                c.trials = 50;
                c.samples = 1000;
            }
            _ => {
                return Err(Error::Parse(format!(
                    "unknown preset '{name}' (expected one of: {})",
                    [PRESETS, REL_PRESETS].concat().join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "preset" => self.preset = v.into(),
            "regime" => self.regime = parse_regime(v)?,
            "task" => self.task = v.parse()?,
            "n" => self.n = parse_list(v)?,
            "ell" => self.ell = parse_list(v)?,
            "variants" => self.variants = parse_list(v)?,
            "testers" => self.testers = parse_list(v)?,
            "params" => self.params = v.parse()?,
            "shape" => self.shape = v.parse()?,
            "budget" => self.budget = v.parse()?,
            "trials" => self.trials = parse_value(key, v)?,
            "samples" => self.samples = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "threads" => self.threads = parse_value(key, v)?,
            "term_arity" => self.term_arity = parse_opt(key, v)?,
            "clause_arity" => self.clause_arity = parse_opt(key, v)?,
            "literal_size" => self.literal_size = parse_opt(key, v)?,
            "exact_limit" => self.exact_limit = parse_value(key, v)?,
            "timing" => self.timing = parse_value(key, v)?,
            "trial_log" => self.trial_log = parse_opt(key, v)?,
            "aggregate" => self.aggregate = parse_opt(key, v)?,
            k => return Err(Error::Parse(format!("unknown config key '{k}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got '{pair}'")))?;
        self.set(k, v)
    }

    fn pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    /// Applies every line of `key=value` text except `preset`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in Self::pairs(text)? {
            if k != "preset" {
                self.set(&k, &v)?;
            }
        }
        Ok(())
    }

    /// Parses line-oriented `key=value` text; `#` starts a comment. A `preset`
    /// line selects the starting point, later lines override it.
    pub fn parse(text: &str, fallback_preset: &str) -> Result<Self> {
        let pairs = Self::pairs(text)?;
        let preset = pairs.iter().find(|(k, _)| k == "preset").map_or(fallback_preset, |(_, v)| v.as_str());
        let complete = Self::base(preset).entries().iter().all(|(k, _)| {
            matches!(*k, "threads" | "trial_log" | "aggregate") || pairs.iter().any(|(p, _)| p == k)
        });
        // A full echo (as written into report headers) may name an ad hoc preset.
        let mut c = match Self::preset(preset) {
            Err(_) if complete => Self::base(preset),
            other => other?,
        };
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path, fallback_preset: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, fallback_preset)
    }

    /// Every setting, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("preset", self.preset.clone()),
            ("regime", self.regime.name().into()),
            ("task", self.task.to_string()),
            ("n", join(&self.n)),
            ("ell", join(&self.ell)),
            ("variants", join(&self.variants)),
            ("testers", join(&self.testers)),
            ("params", self.params.to_string()),
            ("shape", self.shape.to_string()),
            ("budget", self.budget.to_string()),
            ("trials", self.trials.to_string()),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("term_arity", opt(&self.term_arity)),
            ("clause_arity", opt(&self.clause_arity)),
            ("literal_size", opt(&self.literal_size)),
            ("exact_limit", self.exact_limit.to_string()),
            ("timing", self.timing.to_string()),
            ("trial_log", opt(&self.trial_log.as_ref().map(|p| p.display()))),
            ("aggregate", opt(&self.aggregate.as_ref().map(|p| p.display()))),
        ]
    }

    /// Settings that determine the emitted numbers: everything except thread
    /// count and output paths.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        self.entries().into_iter().filter(|(k, _)| !matches!(*k, "threads" | "trial_log" | "aggregate")).collect()
    }

    /// Config file text that reproduces this config.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn master_seed(&self) -> Seed {
        Seed::from_u64(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.ell.is_empty() || self.variants.is_empty() {
            return Err(Error::Parse("n, ell and variants must be non-empty".into()));
        }
        if let Some(v) = self.variants.iter().find(|v| v.regime() != self.regime) {
            return Err(Error::Parse(format!("variant {v} does not belong to the {} regime", self.regime.name())));
        }
        if self.task == Task::Attack && self.testers.is_empty() {
            return Err(Error::Parse("attack trials need at least one tester".into()));
        }
        if self.regime == Regime::Sandwich {
            if let Some(t) = self.testers.iter().find(|t| t.is_algorithmic()) {
                if self.task == Task::Attack {
                    return Err(Error::Parse(format!("tester {t} runs only on middle-regime instances")));
                }
            }
        }
        if self.ell.contains(&0) {
            return Err(Error::Parse("ell must be >= 1".into()));
        }
        Ok(())
    }

    fn three_level(&self) -> bool {
        match self.shape {
            Shape::Even => false,
            Shape::ThreeLevel => true,
            Shape::Auto => self.testers.iter().any(|t| matches!(t, TesterKind::ThreeLevel | TesterKind::Cwx)),
        }
    }

    /// Sandwich parameters after overrides.
    pub fn sandwich_params(&self, n: u32, ell: usize) -> Result<SandwichParams> {
        let base = match self.params {
            ParamSet::Desk => SandwichParams::desk(n, ell)?,
            ParamSet::Paper => SandwichParams::paper(n, ell)?,
        };
        let base = match self.literal_size {
            Some(s) => SandwichParams::for_literal_size(n, ell, s)?,
            None => base,
        };
        SandwichParams::with_arities(
            n,
            ell,
            self.term_arity.unwrap_or(base.term_arity),
            self.clause_arity.unwrap_or(base.clause_arity),
            base.literal_size,
        )
    }

    /// The multiplexer used for grid point `(n, ell)`.
    pub fn build_spec(&self, n: u32, ell: usize, spec_seed: Seed) -> Result<MultiplexerSpec> {
        if self.regime == Regime::Sandwich {
            return self.sandwich_params(n, ell)?.spec(spec_seed);
        }
        if self.three_level() {
            return three_level_spec(n, self.term_arity, self.literal_size, spec_seed);
        }
        if self.term_arity.is_none() && self.literal_size.is_none() {
            return MultiplexerSpec::paper(n, ell, spec_seed);
        }
        let r = isqrt(n);
        let arity = self.term_arity.unwrap_or_else(|| 1u64 << r.min(62));
        MultiplexerSpec::new(n, vec![arity; 2 * ell], self.literal_size.unwrap_or(r), spec_seed)
    }

    /// The instance of family `variant` on grid point `(n, ell)`.
    pub fn build_instance(
        &self,
        n: u32,
        ell: usize,
        variant: VariantKind,
        spec_seed: Seed,
        leaf_seed: Seed,
    ) -> Result<FunctionInstance> {
        let spec = self.build_spec(n, ell, spec_seed)?;
        match variant {
            VariantKind::Yes => FunctionInstance::new(spec, Variant::Yes, leaf_seed),
            VariantKind::No => FunctionInstance::sample_no(spec, leaf_seed),
            VariantKind::CwxNo => FunctionInstance::new(spec, Variant::CwxNo, leaf_seed),
            VariantKind::RelYes => FunctionInstance::new(spec, Variant::RelYes, leaf_seed),
            VariantKind::RelNo => FunctionInstance::sample_rel_no(spec, leaf_seed),
        }
    }

    fn formula_budget(&self, n: u32, ell: usize) -> u64 {
        match self.regime {
            Regime::Middle => budget(n, ell),
            Regime::Sandwich => rel_query_budget(n, ell),
        }
    }

    fn attack_params(&self, tester: TesterKind, n: u32, ell: usize) -> AttackParams {
        match (tester, self.params) {
            (TesterKind::ThreeLevel, ParamSet::Desk) => AttackParams::desk_three_level(n),
            (TesterKind::ThreeLevel, ParamSet::Paper) => AttackParams::paper_three_level(n),
            (TesterKind::Cwx, ParamSet::Desk) => AttackParams::desk_cwx(n),
            (TesterKind::Cwx, ParamSet::Paper) => AttackParams::paper_cwx(n),
            (_, ParamSet::Desk) => AttackParams::desk_general(n, ell),
            (_, ParamSet::Paper) => AttackParams::paper_general(n, ell),
        }
    }
}

/// Seeds and shape of the instance a trial ran on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub spec_seed: Seed,
    pub leaf_seed: Seed,
    pub arities: Vec<u64>,
    pub literal_size: u32,
    pub variant: Variant,
    /// Arity override disclosure for two-layer instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<ArityDisclosure>,
}

/// A reported violation and whether it re-verified against the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationDetail {
    pub x: Point,
    pub y: Point,
    pub source: WitnessSource,
    pub verified: bool,
}

/// One row of the trial log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u64,
    pub n: u32,
    pub ell: usize,
    pub variant: VariantKind,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tester: Option<TesterKind>,
    pub trial_seed: Seed,
    pub instance: InstanceDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    pub queries: u64,
    pub rounds: u32,
    /// Violation found, mismatch seen, or positive distance, depending on the task.
    pub rejected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationDetail>,
    /// `|B_ε| / n` of the final outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub danger: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub good: Option<bool>,
    /// Task metric: violating edges, mismatches, distance, unate bound or SAMP failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<String>,
}

/// One CSV row: every trial row of a `(n, ell, variant, tester)` group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: u32,
    pub ell: usize,
    pub variant: VariantKind,
    pub task: Task,
    pub tester: String,
    pub trials: u64,
    pub rejections: u64,
    pub reject_rate: f64,
    pub reject_ci_low: f64,
    pub reject_ci_high: f64,
    pub unverified: u64,
    pub mean_queries: f64,
    pub max_queries: u64,
    pub mean_rounds: f64,
    pub safe_rate: Option<f64>,
    pub good_rate: Option<f64>,
    pub good_ci_low: Option<f64>,
    pub mean_danger: Option<f64>,
    pub mean_value: Option<f64>,
    pub median_value: Option<f64>,
    pub max_value: Option<f64>,
    pub seconds: Option<f64>,
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialReport>,
    pub rows: Vec<AggregateRow>,
    pub wall_seconds: f64,
}

struct Unit {
    n: u32,
    ell: usize,
    variant: VariantKind,
    trial: u64,
}

/// Per-trial seed: `PRF(master, trial index)`.
pub fn trial_seed(master: &Seed, trial: u64) -> Seed {
    master.derive("trial", trial)
}

/// Spec and leaf seeds of the instance a trial builds at grid point `(n, ell)`.
pub fn instance_seeds(trial_seed: &Seed, n: u32, ell: usize) -> (Seed, Seed) {
    (trial_seed.derive(&format!("spec/{n}/{ell}"), 0), trial_seed.derive(&format!("leaf/{n}/{ell}"), 0))
}

fn weighted_layer<R: Rng + ?Sized>(n: u32, lo: u32, hi: u32, rng: &mut R) -> u32 {
    let w: Vec<f64> = (lo..=hi).map(|w| binomial(n, w)).collect();
    lo + WeightedIndex::new(&w).expect("non-empty layer range").sample(rng) as u32
}

fn run_unit(c: &ExperimentConfig, u: &Unit, seed: &Seed) -> Result<Vec<TrialReport>> {
    let (n, ell) = (u.n, u.ell);
    let (spec_seed, leaf_seed) = instance_seeds(seed, n, ell);
    let f = c.build_instance(n, ell, u.variant, spec_seed, leaf_seed)?;
    let row = TrialReport {
        trial: u.trial,
        n,
        ell,
        variant: u.variant,
        task: c.task,
        tester: None,
        trial_seed: *seed,
        instance: InstanceDescriptor {
            spec_seed,
            leaf_seed,
            arities: f.spec().arities().to_vec(),
            literal_size: f.spec().literal_size(),
            variant: f.variant(),
            arity: (f.regime() == Regime::Sandwich).then(|| spec_disclosure(f.spec())),
        },
        budget: None,
        queries: 0,
        rounds: 0,
        rejected: false,
        violation: None,
        danger: None,
        safe: None,
        good: None,
        value: None,
        values: BTreeMap::new(),
        interpretation: None,
    };
    let mut rng = seed.derive(&format!("task/{n}/{ell}/{}", c.task), 0).rng();
    let (lo, hi) = f.layer_bounds();
    match c.task {
        Task::Attack => run_testers(c, &f, row, seed),
        Task::EdgeScan => {
            let mut hits = 0u64;
            for _ in 0..c.samples {
                let i = rng.random_range(1..=n);
                let w = weighted_layer(n - 1, lo.saturating_sub(1), hi.min(n - 1), &mut rng);
                let rest = sample_layer(n - 1, w, &mut rng);
                let coords: Vec<u32> = rest.ones_coords().iter().map(|&k| if k < i { k } else { k + 1 }).collect();
                let x = Point::from_ones(n, &coords)?;
                let y = x.with(i, true);
                hits += (f.eval(&x) && !f.eval(&y)) as u64;
            }
            Ok(vec![TrialReport {
                rejected: hits > 0,
                value: Some(hits as f64),
                values: BTreeMap::from([("edges".into(), c.samples as f64)]),
                ..row
            }])
        }
        Task::EdgeExhaustive => {
            if n > 20 {
                return Err(Error::ExactLimit { n, limit: 20 });
            }
            let hits = violating_edges_exhaustive(&f).len() as u64;
            let edges = n as f64 * 2f64.powi(n as i32 - 1);
            Ok(vec![TrialReport {
                rejected: hits > 0,
                value: Some(hits as f64),
                values: BTreeMap::from([("edges".into(), edges)]),
                ..row
            }])
        }
        Task::Consistency => {
            let mut mismatches = 0u64;
            for _ in 0..c.samples {
                let x = sample_layer(n, weighted_layer(n, lo, hi, &mut rng), &mut rng);
                mismatches += (f.strong_query(&x)?.implied_value != f.eval(&x)) as u64;
            }
            Ok(vec![TrialReport {
                rejected: mismatches > 0,
                value: Some(mismatches as f64),
                values: BTreeMap::from([("points".into(), c.samples as f64)]),
                ..row
            }])
        }
        Task::Distance => {
            let mut values = BTreeMap::new();
            let value = if n <= c.exact_limit {
                let exact = exact_distance_with_witness(&f, c.exact_limit)?;
                let secret = secret_edges_exhaustive(&f)?.len() as f64;
                values.insert("exact_changes".into(), exact.changes as f64);
                values.insert("secret_edges".into(), secret);
                values.insert("fln".into(), secret / 2f64.powi(n as i32));
                exact.estimate.value
            } else {
                let scan = secret_edge_scan(&f, c.samples, &mut rng)?;
                values.insert("same_leaf_rate".into(), scan.same_leaf_rate);
                values.insert("ci_low".into(), scan.estimate.ci.map_or(0.0, |ci| ci.0));
                scan.estimate.value
            };
            Ok(vec![TrialReport { rejected: value > 0.0, value: Some(value), values, ..row }])
        }
        Task::RelDistance => {
            let r = rel_distance_report(&f, 2, c.samples, &mut rng)?;
            let secret = r.secret_direction.as_ref().map_or(r.unate_lower_bound, |s| s.bound.value);
            let values = BTreeMap::from([
                ("unate".into(), r.unate_lower_bound),
                ("monotone".into(), r.monotone_lower_bound),
                ("ones".into(), r.ones.value),
            ]);
            Ok(vec![TrialReport { rejected: secret > 0.0, value: Some(secret), values, ..row }])
        }
        Task::Samp => {
            let mut failures = 0u64;
            for _ in 0..c.samples {
                let x = f.samp_query(&mut rng)?;
                failures += !f.eval(&x) as u64;
            }
            Ok(vec![TrialReport {
                rejected: failures > 0,
                value: Some(failures as f64),
                values: BTreeMap::from([("samples".into(), c.samples as f64)]),
                ..row
            }])
        }
    }
}

fn run_testers(c: &ExperimentConfig, f: &FunctionInstance, row: TrialReport, seed: &Seed) -> Result<Vec<TrialReport>> {
    let (n, ell) = (row.n, row.ell);
    let formula = c.formula_budget(n, ell);
    let mut matched: Option<u64> = None;
    let mut rows = Vec::new();
    for &t in &c.testers {
        let mut rng = seed.derive(&format!("attack/{n}/{ell}/{t}"), 0).rng();
        let cap = match c.budget {
            BudgetRule::Fixed(q) => Some(q),
            BudgetRule::Formula => Some(formula),
            BudgetRule::Auto if t.is_algorithmic() => None,
            BudgetRule::Auto => Some(matched.unwrap_or(formula)),
        };
        let result = run_tester(c, f, t, cap, formula, ell, &mut rng)?;
        let mut r = TrialReport { tester: Some(t), budget: cap, ..row.clone() };
        if let Some(res) = result {
            if t.is_algorithmic() && matched.is_none() {
                matched = Some(res.budget.queries_used);
            }
            r.queries = res.budget.queries_used;
            r.rounds = res.budget.rounds_used;
            r.interpretation = res.interpretation.clone();
            if let Some(q) = res.query_cap {
                r.values.insert("query_cap".into(), q as f64);
            }
            if let Verdict::ViolationFound { x, y, source } = &res.verdict {
                let verified = x.precedes(y) && f.eval(x) && !f.eval(y);
                r.rejected = true;
                r.violation = Some(ViolationDetail { x: x.clone(), y: y.clone(), source: *source, verified });
            }
            if let Some(o) = &res.outcome {
                r.danger = Some(o.danger().global_fraction(n));
                r.safe = Some(o.is_safe(DEFAULT_TAU));
                r.good = Some(o.is_good(GoodParams::default()));
            }
        }
        rows.push(r);
    }
    Ok(rows)
}

fn run_tester<R: Rng + ?Sized>(
    c: &ExperimentConfig,
    f: &FunctionInstance,
    t: TesterKind,
    cap: Option<u64>,
    formula: u64,
    ell: usize,
    rng: &mut R,
) -> Result<Option<AttackResult>> {
    Ok(match t {
        TesterKind::AlwaysAccept => None,
        TesterKind::Edge => Some(edge_tester(f, cap.unwrap_or(formula) / 2, rng)?),
        TesterKind::Pair => Some(pair_tester(f, cap.unwrap_or(formula) / 2, rng)?),
        _ => {
            let mut p = c.attack_params(t, f.n(), ell);
            p.max_queries = cap;
            p.track_outcome = true;
            Some(match t {
                TesterKind::General => attack_general(f, ell, rng, &p)?,
                TesterKind::ThreeLevel => attack_three_level(f, rng, &p)?,
                _ => attack_cwx_skip(f, rng, &p)?,
            })
        }
    })
}

/// Re-runs the attack of one trial row and returns its instance and final outcome.
pub fn outcome_log(config: &ExperimentConfig, row: &TrialReport) -> Result<Option<OutcomeLog>> {
    let Some(t) = row.tester else { return Ok(None) };
    let f = config.build_instance(row.n, row.ell, row.variant, row.instance.spec_seed, row.instance.leaf_seed)?;
    let mut rng = row.trial_seed.derive(&format!("attack/{}/{}/{t}", row.n, row.ell), 0).rng();
    let formula = config.formula_budget(row.n, row.ell);
    let result = run_tester(config, &f, t, row.budget, formula, row.ell, &mut rng)?;
    Ok(result.and_then(|r| r.outcome).map(|outcome| OutcomeLog { instance: f, outcome }))
}

fn units(c: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::new();
    for &n in &c.n {
        for &ell in &c.ell {
            for &variant in &c.variants {
                for trial in 0..c.trials {
                    out.push(Unit { n, ell, variant, trial });
                }
            }
        }
    }
    out
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Io(format!("thread pool: {e}")))
}

/// Runs every trial of `config` (parallel across trials, rows ordered by grid
/// point and trial index) and writes the configured outputs.
pub fn run(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.validate()?;
    let start = Instant::now();
    let master = config.master_seed();
    let units = units(config);
    let results: Vec<(Vec<TrialReport>, f64)> = pool(config.threads)?.install(|| {
        units
            .par_iter()
            .map(|u| {
                let t = Instant::now();
                let rows = run_unit(config, u, &trial_seed(&master, u.trial))?;
                Ok((rows, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()
    })?;
    let mut trials = Vec::new();
    let mut seconds = BTreeMap::new();
    for (rows, s) in results {
        if let Some(r) = rows.first() {
            *seconds.entry((r.n, r.ell, r.variant)).or_insert(0.0) += s;
        }
        trials.extend(rows);
    }
    let mut rows = aggregate(config, &trials);
    if config.timing {
        for r in &mut rows {
            r.seconds = seconds.get(&(r.n, r.ell, r.variant)).copied();
        }
    }
    let report = AggregateReport { config: config.clone(), trials, rows, wall_seconds: start.elapsed().as_secs_f64() };
    if let Some(path) = &config.trial_log {
        write_file(path, trial_log(&report)?.as_bytes())?;
    }
    if let Some(path) = &config.aggregate {
        write_file(path, aggregate_csv(&report)?.as_bytes())?;
    }
    Ok(report)
}

/// Re-executes one trial row from its recorded seed.
pub fn replay_row(config: &ExperimentConfig, row: &TrialReport) -> Result<TrialReport> {
    let u = Unit { n: row.n, ell: row.ell, variant: row.variant, trial: row.trial };
    let rows = run_unit(config, &u, &row.trial_seed)?;
    rows.into_iter()
        .find(|r| r.tester == row.tester)
        .ok_or_else(|| Error::Parse("trial row does not match the config's testers".into()))
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

/// Groups trial rows by `(n, ell, variant, tester)` in first-seen order.
pub fn aggregate(config: &ExperimentConfig, trials: &[TrialReport]) -> Vec<AggregateRow> {
    let mut keys = Vec::new();
    let mut groups: BTreeMap<(u32, usize, VariantKind, Option<TesterKind>), Vec<&TrialReport>> = BTreeMap::new();
    for t in trials {
        let key = (t.n, t.ell, t.variant, t.tester);
        if !groups.contains_key(&key) {
            keys.push(key);
        }
        groups.entry(key).or_default().push(t);
    }
    keys.into_iter()
        .map(|key| {
            let g = &groups[&key];
            let k = g.len() as u64;
            let rejections = g.iter().filter(|t| t.rejected).count() as u64;
            let rate = Rate::new(rejections, k);
            let goods: Vec<bool> = g.iter().filter_map(|t| t.good).collect();
            let good = (!goods.is_empty()).then(|| Rate::new(goods.iter().filter(|&&b| b).count() as u64, goods.len() as u64));
            let values: Vec<f64> = g.iter().filter_map(|t| t.value).collect();
            AggregateRow {
                n: key.0,
                ell: key.1,
                variant: key.2,
                task: config.task,
                tester: key.3.map_or_else(|| config.task.to_string(), |t| t.to_string()),
                trials: k,
                rejections,
                reject_rate: rate.rate,
                reject_ci_low: rate.ci_low,
                reject_ci_high: rate.ci_high,
                unverified: g.iter().filter(|t| t.violation.as_ref().is_some_and(|v| !v.verified)).count() as u64,
                mean_queries: mean(g.iter().map(|t| t.queries as f64)).unwrap_or(0.0),
                max_queries: g.iter().map(|t| t.queries).max().unwrap_or(0),
                mean_rounds: mean(g.iter().map(|t| t.rounds as f64)).unwrap_or(0.0),
                safe_rate: mean(g.iter().filter_map(|t| t.safe).map(|b| b as u8 as f64)),
                good_rate: good.map(|r| r.rate),
                good_ci_low: good.map(|r| r.ci_low),
                mean_danger: mean(g.iter().filter_map(|t| t.danger)),
                mean_value: mean(values.iter().copied()),
                median_value: median(&values),
                max_value: values.iter().copied().reduce(f64::max),
                seconds: None,
            }
        })
        .collect()
}

/// JSON-lines trial log: a config header line, then one row per trial and tester.
pub fn trial_log(report: &AggregateReport) -> Result<String> {
    let header: BTreeMap<&str, String> = report.config.echo().into_iter().collect();
    let mut out = serde_json::to_string(&serde_json::json!({ "config": header })).map_err(json_err)?;
    out.push('\n');
    for t in &report.trials {
        out.push_str(&serde_json::to_string(t).map_err(json_err)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a trial log back into its config echo and rows.
pub fn read_trial_log(text: &str) -> Result<(BTreeMap<String, String>, Vec<TrialReport>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: serde_json::Value =
        serde_json::from_str(lines.next().ok_or_else(|| Error::Parse("empty trial log".into()))?).map_err(json_err)?;
    let config = serde_json::from_value(header["config"].clone()).map_err(json_err)?;
    let rows = lines.map(|l| serde_json::from_str(l).map_err(json_err)).collect::<Result<_>>()?;
    Ok((config, rows))
}

/// CSV aggregate with the config echoed as leading `#` lines.
pub fn aggregate_csv(report: &AggregateReport) -> Result<String> {
    let mut out = String::new();
    for (k, v) in report.config.echo() {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    if report.rows.is_empty() {
        w.write_record(AGGREGATE_COLUMNS).map_err(csv_err)?;
    }
    for r in &report.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

const AGGREGATE_COLUMNS: &[&str] = &[
    "n",
    "ell",
    "variant",
    "task",
    "tester",
    "trials",
    "rejections",
    "reject_rate",
    "reject_ci_low",
    "reject_ci_high",
    "unverified",
    "mean_queries",
    "max_queries",
    "mean_rounds",
    "safe_rate",
    "good_rate",
    "good_ci_low",
    "mean_danger",
    "mean_value",
    "median_value",
    "max_value",
    "seconds",
];

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    file.write_all(bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One pass/fail line of a preset check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn line(name: &str, pass: bool, detail: String) -> CheckLine {
    CheckLine { name: name.into(), pass, detail }
}

fn rows_for(report: &AggregateReport, tester: TesterKind) -> impl Iterator<Item = &AggregateRow> {
    report.rows.iter().filter(move |r| r.tester == tester.name())
}

/// The claim a preset reproduces, checked against its report. Presets without
/// a claim return no lines.
pub fn check(report: &AggregateReport) -> Vec<CheckLine> {
    let all_zero = |what: &str| {
        let bad: u64 = report.rows.iter().map(|r| r.rejections).sum();
        line(what, bad == 0, format!("{bad} rejecting trials out of {}", report.trials.len()))
    };
    let verified = || {
        let bad: u64 = report.rows.iter().map(|r| r.unverified).sum();
        line("violations re-verify", bad == 0, format!("{bad} unverified"))
    };
    match report.config.preset.as_str() {
        "yes-monotone-sweep" | "rel-yes-sweep" => vec![all_zero("zero violating edges on yes instances")],
        "oracle-consistency" => vec![all_zero("strong answers imply eval")],
        "samp" => vec![all_zero("SAMP outputs satisfy eval = 1")],
        "no-distance" => {
            let k = report.trials.len();
            let positive = report.trials.iter().filter(|t| t.value.unwrap_or(0.0) > 0.0).count();
            let mismatched = report
                .trials
                .iter()
                .filter(|t| match (t.values.get("exact_changes"), t.values.get("secret_edges")) {
                    (Some(a), Some(b)) => a != b,
                    _ => false,
                })
                .count();
            vec![
                line("exact distance positive on >= 30% of seeds", positive as f64 >= 0.3 * k as f64, format!("{positive}/{k}")),
                line("exact distance equals the secret-edge bound", mismatched == 0, format!("{mismatched} mismatches")),
            ]
        }
        "good-outcome" => rows_for(report, TesterKind::General)
            .map(|r| {
                let g = r.good_rate.unwrap_or(0.0);
                line("good outcomes >= 0.95", g >= 0.95, format!("n={} ell={} good={g:.3}", r.n, r.ell))
            })
            .collect(),
        "attack-general" => {
            let mut out = Vec::new();
            for a in rows_for(report, TesterKind::General) {
                let edge = rows_for(report, TesterKind::Edge)
                    .find(|e| (e.n, e.ell, e.variant) == (a.n, a.ell, a.variant))
                    .map_or(0.0, |e| e.reject_rate);
                out.push(line(
                    "attack rate positive and >= 5x the edge tester",
                    a.reject_rate > 0.0 && a.reject_rate >= 5.0 * edge,
                    format!("n={} attack={:.3} edge={edge:.3}", a.n, a.reject_rate),
                ));
            }
            out.push(verified());
            out
        }
        "attack-cwx" | "three-level" => {
            let t = if report.config.preset == "attack-cwx" { TesterKind::Cwx } else { TesterKind::ThreeLevel };
            let mut out: Vec<CheckLine> = rows_for(report, t)
                .map(|r| line("positive violation rate", r.reject_rate > 0.0, format!("n={} rate={:.3}", r.n, r.reject_rate)))
                .collect();
            if t == TesterKind::ThreeLevel {
                for a in rows_for(report, t) {
                    if let Some(p) = rows_for(report, TesterKind::Pair).find(|p| (p.n, p.ell, p.variant) == (a.n, a.ell, a.variant)) {
                        out.push(line(
                            "three-level rate >= 5x the pair tester",
                            a.reject_rate >= 5.0 * p.reject_rate,
                            format!("n={} three-level={:.3} pair={:.3}", a.n, a.reject_rate, p.reject_rate),
                        ));
                    }
                }
            }
            let over = report
                .trials
                .iter()
                .filter(|r| r.tester == Some(t))
                .filter(|r| r.values.get("query_cap").is_some_and(|&q| r.queries as f64 > q))
                .count();
            out.push(line("queries within the schedule cap", over == 0, format!("{over} over")));
            out.push(verified());
            out
        }
        "rel-no-distance" => {
            let values: Vec<f64> = report.trials.iter().filter_map(|t| t.value).collect();
            let m = median(&values).unwrap_or(0.0);
            vec![line("median unate bound along the secret > 0", m > 0.0, format!("median={m:.4}"))]
        }
        _ => Vec::new(),
    }
}

/// `true` when every check line passes.
pub fn passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.pass)
}
