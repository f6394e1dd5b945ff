//! The outcome ledger `(Q, P, R, ρ)` built from stronger-oracle answers, with
//! its coordinate sets, dangerous sets and the safe/good predicates.
//!
//! `R` is stored as rules rather than expanded sets: a single case-2 answer at
//! a node of arity `N` puts the query into `N` edge sets, so each rule records
//! the parent node, the query and which children it covers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{isqrt, Point};
use crate::multiplexer::{EdgeAddress, NodeAddress, Terminal};
use crate::talagrand::{FunctionInstance, Regime, StrongCase, StrongResponse};

/// Which children of a parent node an `R` rule covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RCover {
    /// Every child except the traversed one.
    AllExcept(u64),
    /// Every child (no edge activated).
    All,
    /// Children `a < a2` other than `a1` (two or more activated).
    BelowExcept { a1: u64, a2: u64 },
}

impl RCover {
    pub fn covers(self, a: u64) -> bool {
        match self {
            RCover::AllExcept(t) => a != t,
            RCover::All => true,
            RCover::BelowExcept { a1, a2 } => a < a2 && a != a1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RRule {
    pub query: usize,
    pub cover: RCover,
}

/// The ledger of everything the stronger oracle has revealed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Outcome {
    n: u32,
    levels: usize,
    regime: Regime,
    queries: Vec<Point>,
    p: BTreeMap<NodeAddress, Vec<usize>>,
    r: BTreeMap<NodeAddress, Vec<RRule>>,
    rho: BTreeMap<NodeAddress, BTreeMap<usize, bool>>,
    duplicates: u64,
    #[serde(skip)]
    index: HashMap<Point, usize>,
}

impl PartialEq for Outcome {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.levels == o.levels
            && self.regime == o.regime
            && self.queries == o.queries
            && self.p == o.p
            && self.r == o.r
            && self.rho == o.rho
            && self.duplicates == o.duplicates
    }
}

/// `A_{u,0}` and `A_{u,1}` for every node with `P_u ≠ ∅`, as sorted coordinate lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateSets {
    pub sets: BTreeMap<NodeAddress, (Vec<u32>, Vec<u32>)>,
}

/// Dangerous sets per leaf, their unions per node, and the global union `B_ε`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DangerReport {
    pub leaves: BTreeMap<NodeAddress, Vec<u32>>,
    pub nodes: BTreeMap<NodeAddress, Vec<u32>>,
    pub global: Vec<u32>,
}

impl DangerReport {
    pub fn global_fraction(&self, n: u32) -> f64 {
        self.global.len() as f64 / n as f64
    }
}

/// Base of the logarithm in the goodness slack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Two,
    E,
}

impl LogBase {
    pub fn log(self, n: u32) -> f64 {
        match self {
            LogBase::Two => (n as f64).log2(),
            LogBase::E => (n as f64).ln(),
        }
    }
}

/// Parameters of the goodness predicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodParams {
    pub c: f64,
    pub log_base: LogBase,
}

impl Default for GoodParams {
    fn default() -> Self {
        GoodParams { c: 100.0, log_base: LogBase::Two }
    }
}

/// Default safety threshold on `|B_ε| / n`.
pub const DEFAULT_TAU: f64 = 0.1;

/// Bitwise AND of every listed point, and of every complement.
fn agree_masks(points: &[&Point]) -> (Vec<u64>, Vec<u64>) {
    let words = points[0].words().len();
    let mut ones = vec![u64::MAX; words];
    let mut zeros = vec![u64::MAX; words];
    for x in points {
        for (k, w) in x.words().iter().enumerate() {
            ones[k] &= w;
            zeros[k] &= !w;
        }
    }
    (zeros, ones)
}

fn mask_coords(mask: &[u64], n: u32) -> Vec<u32> {
    (1..=n).filter(|&i| (mask[((i - 1) / 64) as usize] >> ((i - 1) % 64)) & 1 == 1).collect()
}

impl Outcome {
    pub fn new(n: u32, levels: usize, regime: Regime) -> Outcome {
        Outcome {
            n,
            levels,
            regime,
            queries: Vec::new(),
            p: BTreeMap::new(),
            r: BTreeMap::new(),
            rho: BTreeMap::new(),
            duplicates: 0,
            index: HashMap::new(),
        }
    }

    pub fn for_instance(f: &FunctionInstance) -> Outcome {
        Outcome::new(f.n(), f.levels(), f.regime())
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn queries(&self) -> &[Point] {
        &self.queries
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// `P_u` as query indices.
    pub fn p_set(&self, u: &NodeAddress) -> &[usize] {
        self.p.get(u).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nonempty_nodes(&self) -> impl Iterator<Item = (&NodeAddress, &Vec<usize>)> {
        self.p.iter()
    }

    /// `ρ_u` for a leaf.
    pub fn rho(&self, u: &NodeAddress) -> Option<&BTreeMap<usize, bool>> {
        self.rho.get(u)
    }

    /// `R_e`, materialized from the stored rules.
    pub fn r_set(&self, e: &EdgeAddress) -> BTreeSet<usize> {
        let parent = e.0.parent().expect("edge child is non-root");
        let a = e.0.last().unwrap();
        self.r
            .get(&parent)
            .into_iter()
            .flatten()
            .filter(|rule| rule.cover.covers(a))
            .map(|rule| rule.query)
            .collect()
    }

    pub fn r_rules(&self, parent: &NodeAddress) -> &[RRule] {
        self.r.get(parent).map(Vec::as_slice).unwrap_or(&[])
    }

    fn validate(&self, x: &Point, resp: &StrongResponse) -> Result<()> {
        let bad = |m: &str| Err(Error::InconsistentResponse(m.to_string()));
        if x.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: x.n() });
        }
        let path = &resp.path.path;
        if path.is_empty() || !path[0].is_root() {
            return bad("path does not start at the root");
        }
        if path.windows(2).any(|w| w[1].parent().as_ref() != Some(&w[0]) || w[1].last() == Some(0)) {
            return bad("path is not a root chain");
        }
        let k = resp.depth();
        if k > self.levels {
            return bad("path deeper than the tree");
        }
        match (resp.case, resp.path.terminal) {
            (StrongCase::Leaf { .. }, Terminal::Leaf) if k == self.levels => Ok(()),
            (StrongCase::None, Terminal::NoneActivated) if k < self.levels => Ok(()),
            (StrongCase::Multi { a1, a2, bits }, Terminal::MultiActivated(b1, b2))
                if k < self.levels && a1 == b1 && a2 == b2 && 1 <= a1 && a1 < a2 =>
            {
                if bits.is_some() == (k + 1 == self.levels) {
                    Ok(())
                } else {
                    bad("leaf bits must accompany a multi case exactly one level above the leaves")
                }
            }
            _ => bad("case disagrees with the path terminal"),
        }
    }

    /// Folds one answer into the ledger. Returns `false` for a repeated query,
    /// which only bumps the duplicate counter.
    pub fn ingest(&mut self, x: &Point, resp: &StrongResponse) -> Result<bool> {
        self.validate(x, resp)?;
        if self.index.contains_key(x) {
            self.duplicates += 1;
            return Ok(false);
        }
        let q = self.queries.len();
        self.queries.push(x.clone());
        self.index.insert(x.clone(), q);
        let path = &resp.path.path;
        for v in &path[1..] {
            self.p.entry(v.clone()).or_default().push(q);
            let parent = v.parent().unwrap();
            self.r.entry(parent).or_default().push(RRule { query: q, cover: RCover::AllExcept(v.last().unwrap()) });
        }
        let end = resp.path.end().clone();
        match resp.case {
            StrongCase::Leaf { bit } => {
                self.rho.entry(end).or_default().insert(q, bit);
            }
            StrongCase::None => {
                self.r.entry(end).or_default().push(RRule { query: q, cover: RCover::All });
            }
            StrongCase::Multi { a1, a2, bits } => {
                let (v1, v2) = (end.child(a1), end.child(a2));
                self.p.entry(v1.clone()).or_default().push(q);
                self.p.entry(v2.clone()).or_default().push(q);
                self.r.entry(end).or_default().push(RRule { query: q, cover: RCover::BelowExcept { a1, a2 } });
                if let Some((b1, b2)) = bits {
                    self.rho.entry(v1).or_default().insert(q, b1);
                    self.rho.entry(v2).or_default().insert(q, b2);
                }
            }
        }
        debug_assert!(self.p.len() <= (self.levels + 1) * self.queries.len());
        Ok(true)
    }

    /// Rebuilds the ledger by re-querying `f` on each point in order.
    pub fn replay(f: &FunctionInstance, queries: &[Point]) -> Result<Outcome> {
        let mut o = Outcome::for_instance(f);
        for x in queries {
            o.ingest(x, &f.strong_query(x)?)?;
        }
        Ok(o)
    }

    /// Restores the query index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.queries.iter().cloned().enumerate().map(|(k, x)| (x, k)).collect();
    }

    fn masks(&self, u: &NodeAddress) -> Option<(Vec<u64>, Vec<u64>)> {
        let idx = self.p.get(u)?;
        let pts: Vec<&Point> = idx.iter().map(|&k| &self.queries[k]).collect();
        Some(agree_masks(&pts))
    }

    pub fn coordinate_sets(&self) -> CoordinateSets {
        let sets = self
            .p
            .keys()
            .map(|u| {
                let (z, o) = self.masks(u).unwrap();
                (u.clone(), (mask_coords(&z, self.n), mask_coords(&o, self.n)))
            })
            .collect();
        CoordinateSets { sets }
    }

    pub fn danger(&self) -> DangerReport {
        let mut leaves = BTreeMap::new();
        for u in self.p.keys().filter(|u| u.depth() == self.levels) {
            let (z, o) = self.masks(u).unwrap();
            let d: Vec<u64> = z.iter().zip(&o).map(|(a, b)| !(a | b)).collect();
            leaves.insert(u.clone(), mask_coords(&d, self.n));
        }
        let mut nodes: BTreeMap<NodeAddress, BTreeSet<u32>> = BTreeMap::new();
        nodes.insert(NodeAddress::root(), BTreeSet::new());
        for u in self.p.keys() {
            nodes.entry(u.clone()).or_default();
        }
        for (leaf, d) in &leaves {
            for (u, b) in nodes.iter_mut() {
                if u.is_ancestor_of(leaf) {
                    b.extend(d.iter().copied());
                }
            }
        }
        let global = nodes[&NodeAddress::root()].iter().copied().collect();
        let nodes = nodes.into_iter().map(|(u, b)| (u, b.into_iter().collect())).collect();
        DangerReport { leaves, nodes, global }
    }

    /// True when every nonempty leaf has a constant `ρ_u`.
    pub fn rho_constant(&self) -> bool {
        self.rho.values().all(|m| {
            let mut vals = m.values();
            match vals.next() {
                None => true,
                Some(&b) => vals.all(|&c| c == b),
            }
        })
    }

    pub fn is_safe(&self, tau: f64) -> bool {
        assert!(tau > 0.0 && tau < 1.0, "tau must be in (0, 1)");
        self.rho_constant() && self.danger().global.len() as f64 <= tau * self.n as f64
    }

    /// The goodness predicate of the regime this outcome was built under.
    pub fn is_good(&self, params: GoodParams) -> bool {
        assert!(params.c > 0.0, "slack constant must be positive");
        let n = self.n as f64;
        let log = params.log_base.log(self.n);
        let per_point = match self.regime {
            Regime::Middle => params.c * (isqrt(self.n) as f64) * log,
            Regime::Sandwich => params.c * log,
        };
        let (odd_target, even_target) = match self.regime {
            Regime::Middle => (n / 2.0, n / 2.0),
            Regime::Sandwich => (3.0 * n / 4.0, n / 4.0),
        };
        let sets_ok = self.p.iter().all(|(u, idx)| {
            let (z, o) = self.masks(u).unwrap();
            let slack = idx.len() as f64 * per_point;
            if u.depth() % 2 == 1 {
                count(&o) as f64 >= odd_target - slack
            } else {
                count(&z) as f64 >= even_target - slack
            }
        });
        sets_ok && self.rho_constant()
    }

    /// Checks every structural fact the ledger must satisfy; returns the first failure.
    pub fn check_facts(&self) -> std::result::Result<(), String> {
        let q = self.queries.len();
        let sets: BTreeMap<&NodeAddress, BTreeSet<usize>> =
            self.p.iter().map(|(u, v)| (u, v.iter().copied().collect())).collect();
        for (u, s) in &sets {
            if s.len() != self.p[*u].len() {
                return Err(format!("P_{u} repeats a query"));
            }
            if u.depth() >= 2 {
                let parent = u.parent().unwrap();
                match sets.get(&parent) {
                    Some(ps) if s.is_subset(ps) => {}
                    _ => return Err(format!("P_{u} is not contained in P_{parent}")),
                }
            }
        }
        let mut child_sums: BTreeMap<NodeAddress, usize> = BTreeMap::new();
        for (u, s) in &sets {
            *child_sums.entry(u.parent().unwrap()).or_default() += s.len();
        }
        for (parent, total) in &child_sums {
            let cap = if parent.is_root() { 2 * q } else { 2 * sets.get(parent).map_or(0, |s| s.len()) };
            if *total > cap {
                return Err(format!("children of {parent} hold {total} > {cap} queries"));
            }
        }
        if sets.len() > (self.levels + 1) * q {
            return Err(format!("{} nonempty P sets exceed (levels+1)|Q|", sets.len()));
        }
        for (u, s) in &sets {
            if u.depth() == self.levels {
                let dom: BTreeSet<usize> = self.rho.get(*u).map(|m| m.keys().copied().collect()).unwrap_or_default();
                if &dom != s {
                    return Err(format!("rho_{u} is not defined exactly on P_{u}"));
                }
            }
        }
        if self.rho.keys().any(|u| !sets.contains_key(u)) {
            return Err("rho defined at a leaf with empty P".into());
        }
        let cs = self.coordinate_sets();
        let n = self.n;
        let (cap0, cap1) = match self.regime {
            Regime::Middle => (n / 2 + isqrt(n), n / 2 + isqrt(n)),
            Regime::Sandwich => (n / 4, 3 * n / 4 + 1),
        };
        for (u, (a0, a1)) in &cs.sets {
            if a0.iter().any(|i| a1.binary_search(i).is_ok()) {
                return Err(format!("A_{u},0 and A_{u},1 intersect"));
            }
            if a0.len() as u32 > cap0 || a1.len() as u32 > cap1 {
                return Err(format!("A sets at {u} exceed the layer bounds"));
            }
            if u.depth() >= 2 {
                let (p0, p1) = &cs.sets[&u.parent().unwrap()];
                let sub = |small: &Vec<u32>, big: &Vec<u32>| small.iter().all(|i| big.binary_search(i).is_ok());
                if !sub(p0, a0) || !sub(p1, a1) {
                    return Err(format!("A sets at {u} do not contain those of its parent"));
                }
            }
        }
        let danger = self.danger();
        for (u, b) in &danger.nodes {
            if let Some((a0, a1)) = cs.sets.get(u) {
                if b.iter().any(|i| a0.binary_search(i).is_ok() || a1.binary_search(i).is_ok()) {
                    return Err(format!("B_{u} meets A_{u},0 or A_{u},1"));
                }
            }
        }
        Ok(())
    }
}

fn count(mask: &[u64]) -> u32 {
    mask.iter().map(|w| w.count_ones()).sum()
}

/// A replayable record: the instance, its query list and the resulting ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutcomeLog {
    pub instance: FunctionInstance,
    pub outcome: Outcome,
}

impl OutcomeLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome logs serialize")
    }

    pub fn from_json(s: &str) -> Result<OutcomeLog> {
        let mut log: OutcomeLog = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        log.outcome.reindex();
        Ok(log)
    }

    /// Re-ingests the recorded queries and compares against the stored ledger.
    pub fn verify_replay(&self) -> Result<bool> {
        // The query list holds distinct points only, so the duplicate counter is carried over.
        let mut o = Outcome::replay(&self.instance, self.outcome.queries())?;
        o.duplicates = self.outcome.duplicates;
        Ok(o == self.outcome)
    }
}
