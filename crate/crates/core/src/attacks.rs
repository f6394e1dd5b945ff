//! Round-adaptive attacks on no-instances and the baseline edge and pair
//! testers. Every query goes through a [`Session`], whose submit/reveal API
//! makes batch `t` unable to read answers from batch `t` or later.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{isqrt, sample_layer, sample_subset, sample_uniform, Point};
use crate::multiplexer::MultiplexerSpec;
use crate::outcome::{GoodParams, Outcome, DEFAULT_TAU};
use crate::prf::Seed;
use crate::stats::Rate;
use crate::talagrand::{BooleanFunction, FunctionInstance, Regime, StrongCase, StrongResponse, Variant};

/// Round and query allowance of an `r`-round-adaptive algorithm (`r+1` batches).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundBudget {
    pub rounds_allowed: u32,
    pub queries_allowed: u64,
    pub rounds_used: u32,
    pub queries_used: u64,
}

impl RoundBudget {
    pub fn new(rounds_allowed: u32, queries_allowed: u64) -> Self {
        RoundBudget { rounds_allowed, queries_allowed, rounds_used: 0, queries_used: 0 }
    }

    pub fn queries_left(&self) -> u64 {
        self.queries_allowed - self.queries_used
    }
}

/// Answer to one query: the value, plus the stronger oracle's evidence for
/// in-layer points. Out-of-layer points are answered by truncation alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub value: bool,
    pub strong: Option<StrongResponse>,
}

impl Answer {
    /// Child indices of the unique activation path.
    pub fn route(&self) -> Option<&[u64]> {
        self.strong.as_ref().map(|r| r.path.end().0.as_slice())
    }

    fn follows(&self, prefix: &[u64]) -> bool {
        self.route().is_some_and(|r| r.starts_with(prefix))
    }

    /// Path of depth exactly `depth` ending in a leaf or with nothing activated below.
    fn stops_at(&self, depth: usize, levels: usize) -> bool {
        self.strong.as_ref().is_some_and(|r| {
            r.depth() == depth
                && match r.case {
                    StrongCase::Leaf { .. } => depth == levels,
                    StrongCase::None => depth < levels,
                    StrongCase::Multi { .. } => false,
                }
        })
    }
}

/// Something that answers queries.
pub trait Oracle: Sync {
    fn n(&self) -> u32;

    /// Tree depth of the instance, 0 for plain functions.
    fn levels(&self) -> usize;

    fn answer(&self, x: &Point) -> Answer;

    /// Empty outcome ledger, when the oracle reveals tree evidence.
    fn empty_outcome(&self) -> Option<Outcome>;
}

impl Oracle for FunctionInstance {
    fn n(&self) -> u32 {
        FunctionInstance::n(self)
    }

    fn levels(&self) -> usize {
        FunctionInstance::levels(self)
    }

    fn answer(&self, x: &Point) -> Answer {
        match self.strong_query(x) {
            Ok(r) => Answer { value: r.implied_value, strong: Some(r) },
            Err(Error::OutOfLayer { .. }) => Answer { value: self.eval(x), strong: None },
            Err(e) => panic!("oracle failure: {e}"),
        }
    }

    fn empty_outcome(&self) -> Option<Outcome> {
        Some(Outcome::for_instance(self))
    }
}

/// Membership oracle for any function; answers carry no evidence.
pub struct ValueOracle<'a, F: ?Sized>(pub &'a F);

impl<F: BooleanFunction + ?Sized> Oracle for ValueOracle<'_, F> {
    fn n(&self) -> u32 {
        self.0.n()
    }

    fn levels(&self) -> usize {
        0
    }

    fn answer(&self, x: &Point) -> Answer {
        Answer { value: self.0.eval(x), strong: None }
    }

    fn empty_outcome(&self) -> Option<Outcome> {
        None
    }
}

/// Handle to a submitted query; only redeemable against its own batch's answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ticket {
    round: u32,
    index: usize,
}

/// Queries of the round being assembled.
#[derive(Debug)]
pub struct Batch {
    round: u32,
    points: Vec<Point>,
    room: u64,
}

impl Batch {
    /// Queues `x`; returns `None` once the query budget is spent.
    pub fn submit(&mut self, x: Point) -> Option<Ticket> {
        if self.room == 0 {
            return None;
        }
        self.room -= 1;
        self.points.push(x);
        Some(Ticket { round: self.round, index: self.points.len() - 1 })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Answers of one revealed batch.
#[derive(Debug)]
pub struct Answers {
    round: u32,
    answers: Vec<Answer>,
}

impl Answers {
    /// Panics when the ticket belongs to another batch.
    pub fn get(&self, t: Ticket) -> &Answer {
        assert_eq!(t.round, self.round, "round discipline: ticket from batch {} read in batch {}", t.round, self.round);
        &self.answers[t.index]
    }
}

/// Oracle access with accounting, optional outcome tracking, and a log of
/// every answered query.
pub struct Session<'a> {
    f: &'a dyn Oracle,
    budget: RoundBudget,
    open: Option<u32>,
    outcome: Option<Outcome>,
    history: Vec<(Point, bool)>,
}

impl<'a> Session<'a> {
    pub fn new(f: &'a dyn Oracle, budget: RoundBudget, track_outcome: bool) -> Self {
        let outcome = if track_outcome { f.empty_outcome() } else { None };
        Session { f, budget, open: None, outcome, history: Vec::new() }
    }

    pub fn n(&self) -> u32 {
        self.f.n()
    }

    pub fn levels(&self) -> usize {
        self.f.levels()
    }

    pub fn budget(&self) -> RoundBudget {
        self.budget
    }

    /// Starts the next batch. Only one batch can be open at a time.
    pub fn open_round(&mut self) -> Result<Batch> {
        if let Some(r) = self.open {
            return Err(Error::RoundDiscipline(format!("batch {r} is still open")));
        }
        if self.budget.rounds_used >= self.budget.rounds_allowed {
            return Err(Error::RoundsExhausted { allowed: self.budget.rounds_allowed });
        }
        let round = self.budget.rounds_used;
        self.open = Some(round);
        Ok(Batch { round, points: Vec::new(), room: self.budget.queries_left() })
    }

    /// Answers every query of the open batch at once.
    pub fn reveal(&mut self, batch: Batch) -> Result<Answers> {
        if self.open != Some(batch.round) {
            return Err(Error::RoundDiscipline(format!("batch {} is not the open batch", batch.round)));
        }
        let f = self.f;
        let answers: Vec<Answer> = batch.points.par_iter().map(|x| f.answer(x)).collect();
        if let Some(o) = self.outcome.as_mut() {
            for (x, a) in batch.points.iter().zip(&answers) {
                if let Some(r) = &a.strong {
                    o.ingest(x, r)?;
                }
            }
        }
        self.history.extend(batch.points.iter().cloned().zip(answers.iter().map(|a| a.value)));
        self.budget.rounds_used += 1;
        self.budget.queries_used += batch.points.len() as u64;
        self.open = None;
        Ok(Answers { round: batch.round, answers })
    }

    /// Any comparable pair among all answered queries that violates monotonicity.
    pub fn scan_pairs(&self) -> Option<(Point, Point)> {
        let ones: Vec<&Point> = self.history.iter().filter(|h| h.1).map(|h| &h.0).collect();
        let zeros: Vec<&Point> = self.history.iter().filter(|h| !h.1).map(|h| &h.0).collect();
        ones.iter().find_map(|x| zeros.iter().find(|y| x.precedes(y)).map(|y| ((*x).clone(), (*y).clone())))
    }

    pub fn into_outcome(self) -> Option<Outcome> {
        self.outcome
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    /// The pair the algorithm itself constructs in its final round.
    Algorithm,
    /// Found by comparing all answered queries after the last round.
    PairScan,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// `x ≺ y` with `f(x) = 1` and `f(y) = 0`.
    ViolationFound { x: Point, y: Point, source: WitnessSource },
    NoViolation,
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::ViolationFound { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Round { round: u32, label: String, queries: u64 },
    /// Whether the event `E_j` held for one repetition, linked to the repetition it extends.
    Event { id: u32, parent: Option<u32>, j: u32, held: bool },
    /// A partition part whose flip changed the value at the same leaf.
    Candidate { state: u32, part: u32 },
    Halt { reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackResult {
    pub algorithm: String,
    /// Level-count convention the attack ran under, when it is not the standard one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<String>,
    pub verdict: Verdict,
    pub trace: Vec<TraceEvent>,
    pub budget: RoundBudget,
    /// Query cap implied by the attack's schedule constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_cap: Option<u64>,
    #[serde(skip)]
    pub outcome: Option<Outcome>,
}

/// Schedule of the level-by-level attacks. Counts are per repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Fresh weight-n/2 starts tried in the bootstrap batch.
    pub restarts: u32,
    /// Size of each random probe set.
    pub probe: u32,
    /// Probe sets in round 0.
    pub round0: u32,
    /// Parallel repetitions spawned from each live repetition per round.
    pub reps: u32,
    /// Probe sets per repetition in round `j`, indexed by `j - 1`.
    pub inner: Vec<u32>,
    /// Zeros flipped to reach the last level in the skip attack.
    pub step: u32,
    /// Parts of the candidate set in the partition round.
    pub parts: u32,
    /// Size of the blocks `F_j` in the last round.
    pub block: u32,
    /// At most this many live repetitions are extended per round.
    pub max_live: u32,
    /// Query cap is `ceil(query_constant · n^{query_exponent})`.
    pub query_constant: f64,
    pub query_exponent: f64,
    /// Caller's query budget, applied on top of the schedule cap.
    pub max_queries: Option<u64>,
    /// Compare all answered queries for a violation after the last round.
    pub pair_scan: bool,
    pub track_outcome: bool,
}

/// `n^e` rounded to the nearest integer, at least 1.
pub fn round_pow(n: u32, e: f64) -> u32 {
    ((n as f64).powf(e).round() as u32).max(1)
}

impl AttackParams {
    /// Counts exactly as in the general `(2ℓ+1)`-round attack.
    pub fn paper_general(n: u32, ell: usize) -> Self {
        let d = 4.0 * ell as f64 + 2.0;
        AttackParams {
            restarts: 32,
            probe: isqrt(n).max(1),
            round0: round_pow(n, 0.5 - 1.0 / d),
            reps: round_pow(n, 1.0 / d),
            inner: (1..2 * ell).map(|j| round_pow(n, 0.5 - (j as f64 + 1.0) / d)).collect(),
            parts: round_pow(n, 1.0 / d),
            block: isqrt(n).max(1),
            step: isqrt(n).max(1),
            max_live: u32::MAX,
            query_constant: 64.0,
            query_exponent: 0.5 - 1.0 / d,
            max_queries: None,
            pair_scan: true,
            track_outcome: false,
        }
    }

    /// Desk-scale constants for the general attack: smaller probes, more of them.
    pub fn desk_general(n: u32, ell: usize) -> Self {
        let mut p = Self::paper_general(n, ell);
        let r = isqrt(n).max(4);
        p.restarts = 12;
        p.probe = (r / 4).max(1);
        p.round0 = 3 * r;
        p.reps = 16;
        p.inner = vec![2; 2 * ell - 1];
        p.parts = 2 * r;
        p.block = 2;
        p.max_live = 8;
        p.query_constant = 40.0;
        p
    }

    /// Counts of the four-round attack on three levels.
    pub fn paper_three_level(n: u32) -> Self {
        AttackParams {
            restarts: 32,
            probe: isqrt(n).max(1),
            round0: round_pow(n, 3.0 / 8.0),
            reps: round_pow(n, 1.0 / 8.0),
            inner: vec![round_pow(n, 0.25), round_pow(n, 1.0 / 8.0)],
            parts: round_pow(n, 1.0 / 8.0),
            block: isqrt(n).max(1),
            step: isqrt(n).max(1),
            max_live: u32::MAX,
            query_constant: 64.0,
            query_exponent: 3.0 / 8.0,
            max_queries: None,
            pair_scan: true,
            track_outcome: false,
        }
    }

    pub fn desk_three_level(n: u32) -> Self {
        let mut p = Self::paper_three_level(n);
        let r = isqrt(n).max(4);
        p.restarts = 24;
        p.probe = (3 * r / 8).max(1);
        p.round0 = 4 * r;
        p.reps = 16;
        p.inner = vec![(3 * r / 4).max(1), 2];
        p.parts = 2 * r;
        p.block = 2;
        p.max_live = 8;
        p.query_constant = 192.0;
        p
    }

    /// Counts of the three-round skip attack.
    pub fn paper_cwx(n: u32) -> Self {
        AttackParams {
            restarts: 32,
            probe: isqrt(n).max(1),
            round0: round_pow(n, 1.0 / 3.0),
            reps: round_pow(n, 1.0 / 6.0),
            inner: vec![round_pow(n, 1.0 / 6.0)],
            parts: round_pow(n, 1.0 / 6.0),
            block: isqrt(n).max(1),
            step: isqrt(n).max(1),
            max_live: u32::MAX,
            query_constant: 64.0,
            query_exponent: 1.0 / 3.0,
            max_queries: None,
            pair_scan: true,
            track_outcome: false,
        }
    }

    pub fn desk_cwx(n: u32) -> Self {
        let mut p = Self::paper_cwx(n);
        let r = isqrt(n).max(4);
        p.restarts = 12;
        p.probe = (r / 4).max(1);
        p.round0 = 4 * r;
        p.reps = 24;
        p.step = 2;
        p.inner = vec![4];
        p.parts = 2 * r;
        p.block = 1;
        p.max_live = 8;
        p
    }

    pub fn query_cap(&self, n: u32) -> u64 {
        (self.query_constant * (n as f64).powf(self.query_exponent)).ceil() as u64
    }

    fn budget(&self, n: u32, batches: u32) -> RoundBudget {
        let cap = self.query_cap(n).min(self.max_queries.unwrap_or(u64::MAX));
        RoundBudget::new(batches, cap)
    }
}

/// A live repetition: point, its activation route, the free set (flippable
/// without disturbing the route) and the candidate set meant to hold the secret.
#[derive(Clone, Debug)]
struct Rep {
    id: u32,
    x: Point,
    route: Vec<u64>,
    free: Vec<u32>,
    cand: Vec<u32>,
    value: bool,
}

struct Engine<'a> {
    session: Session<'a>,
    trace: Vec<TraceEvent>,
    seed: Seed,
    next_id: u32,
}

impl<'a> Engine<'a> {
    fn new<R: Rng + ?Sized>(f: &'a FunctionInstance, budget: RoundBudget, track: bool, rng: &mut R) -> Self {
        Engine { session: Session::new(f, budget, track), trace: Vec::new(), seed: Seed(rng.random()), next_id: 0 }
    }

    fn fresh_id(&mut self) -> u32 {
        self.next_id += 1;
        self.next_id
    }

    fn rng(&self, label: &str, id: u32) -> rand_chacha::ChaCha8Rng {
        self.seed.derive(label, id as u64).rng()
    }

    fn open(&mut self) -> Result<Batch> {
        self.session.open_round()
    }

    fn reveal(&mut self, b: Batch, label: &str) -> Result<Answers> {
        let queries = b.len() as u64;
        let round = self.session.budget().rounds_used;
        self.trace.push(TraceEvent::Round { round, label: label.into(), queries });
        self.session.reveal(b)
    }

    fn halt(&mut self, reason: &str) {
        self.trace.push(TraceEvent::Halt { reason: reason.into() });
    }

    /// One batch of uniform weight-n/2 starts; keeps the first whose route
    /// stops at `depth`.
    fn bootstrap(&mut self, restarts: u32, depth: usize) -> Result<Option<(Point, Answer)>> {
        let n = self.session.n();
        let levels = self.session.levels();
        let mut rng = self.rng("bootstrap", 0);
        let mut b = self.open()?;
        let tickets: Vec<(Point, Ticket)> = (0..restarts)
            .map_while(|_| {
                let x = sample_layer(n, n / 2, &mut rng);
                b.submit(x.clone()).map(|t| (x, t))
            })
            .collect();
        let ans = self.reveal(b, "bootstrap")?;
        Ok(tickets.into_iter().find_map(|(x, t)| {
            let a = ans.get(t);
            a.stops_at(depth, levels).then(|| (x, a.clone()))
        }))
    }

    /// Probes `pool` with `count` random subsets flipped in `x`, keeping the
    /// subsets whose answers still follow `prefix`.
    fn probe_free(
        &mut self,
        x: &Point,
        pool: &[u32],
        count: u32,
        size: u32,
        prefix: &[u64],
        label: &str,
    ) -> Result<Vec<u32>> {
        let mut rng = self.rng(label, 0);
        let mut b = self.open()?;
        let size = (size as usize).min(pool.len());
        let mut probes = Vec::new();
        for _ in 0..count {
            let s = sample_subset(pool, size, &mut rng);
            match b.submit(x.flip_coords(&s)) {
                Some(t) => probes.push((s, t)),
                None => break,
            }
        }
        let ans = self.reveal(b, label)?;
        Ok(union(probes.into_iter().filter(|(_, t)| ans.get(*t).follows(prefix)).map(|(s, _)| s)))
    }

    /// Round `j`: each live repetition spawns `reps` children
    /// `x' = x^{free ∪ C0'}` with `C0' ⊆ cand`, plus probes of `free` in `x'`.
    fn descend(&mut self, live: &[Rep], j: usize, params: &AttackParams) -> Result<Vec<Rep>> {
        let levels = self.session.levels();
        let inner = params.inner.get(j - 1).copied().unwrap_or(0);
        let mut b = self.open()?;
        let mut spawned = Vec::new();
        'outer: for rep in live.iter().take(params.max_live as usize) {
            for _ in 0..params.reps {
                let id = self.fresh_id();
                let mut rng = self.rng("rep", id);
                let c0 = sample_subset(&rep.cand, rep.free.len().min(rep.cand.len()), &mut rng);
                let flips: Vec<u32> = rep.free.iter().chain(&c0).copied().collect();
                let xp = rep.x.flip_coords(&flips);
                let Some(tx) = b.submit(xp.clone()) else { break 'outer };
                let size = (params.probe as usize).min(rep.free.len());
                let mut probes = Vec::new();
                for _ in 0..inner {
                    let r = sample_subset(&rep.free, size, &mut rng);
                    match b.submit(xp.flip_coords(&r)) {
                        Some(t) => probes.push((r, t)),
                        None => break,
                    }
                }
                spawned.push((rep.id, id, xp, c0, tx, probes, rep.route.clone()));
            }
        }
        let ans = self.reveal(b, &format!("round {j}"))?;
        let mut next = Vec::new();
        for (parent, id, xp, c0, tx, probes, route) in spawned {
            let a = ans.get(tx);
            let held = a.follows(&route) && a.stops_at(j + 1, levels) && !c0.is_empty();
            self.trace.push(TraceEvent::Event { id, parent: Some(parent), j: j as u32 + 1, held });
            if !held {
                continue;
            }
            let route = a.route().unwrap().to_vec();
            let free = union(probes.into_iter().filter(|(_, t)| ans.get(*t).follows(&route)).map(|(r, _)| r));
            next.push(Rep { id, x: xp, route, free, cand: c0, value: a.value });
        }
        Ok(next)
    }

    /// Partition round and block round on repetitions that reached a leaf.
    fn finish(&mut self, leaves: &[Rep], params: &AttackParams, last: u32) -> Result<Option<(Point, Point)>> {
        let mut b = self.open()?;
        let mut parts = Vec::new();
        'outer: for rep in leaves.iter().take(params.max_live as usize) {
            let mut rng = self.rng("partition", rep.id);
            let mut cand = rep.cand.clone();
            cand.shuffle(&mut rng);
            let k = (params.parts as usize).clamp(1, cand.len().max(1));
            for (t, delta) in split(&cand, k).into_iter().enumerate() {
                let free = sample_subset(&rep.free, delta.len().min(rep.free.len()), &mut rng);
                let flips: Vec<u32> = free.iter().chain(&delta).copied().collect();
                let w = rep.x.flip_coords(&flips);
                let Some(tk) = b.submit(w.clone()) else { break 'outer };
                parts.push((rep, t as u32, delta, w, tk));
            }
        }
        let ans = self.reveal(b, &format!("round {}", last - 1))?;
        let mut chosen = Vec::new();
        for rep in leaves.iter().take(params.max_live as usize) {
            let hits: Vec<_> = parts
                .iter()
                .filter(|p| p.0.id == rep.id)
                .filter(|p| {
                    let a = ans.get(p.4);
                    a.route() == Some(rep.route.as_slice()) && a.value != rep.value
                })
                .collect();
            if let [(rep, t, delta, w, tk)] = hits.as_slice() {
                self.trace.push(TraceEvent::Candidate { state: rep.id, part: *t });
                chosen.push((rep.id, delta.clone(), w.clone(), ans.get(*tk).value));
            }
        }
        if chosen.is_empty() {
            return Ok(None);
        }
        let mut b = self.open()?;
        let mut blocks = Vec::new();
        'outer2: for (id, delta, w, wv) in &chosen {
            let mut rng = self.rng("blocks", *id);
            let mut d = delta.clone();
            d.shuffle(&mut rng);
            for chunk in d.chunks(params.block.max(1) as usize) {
                let wf = w.flip_coords(chunk);
                let Some(tk) = b.submit(wf.clone()) else { break 'outer2 };
                blocks.push((w, *wv, wf, tk));
            }
        }
        let ans = self.reveal(b, &format!("round {last}"))?;
        Ok(blocks.into_iter().find_map(|(w, wv, wf, tk)| violation(w, wv, &wf, ans.get(tk).value)))
    }

    fn conclude(
        mut self,
        f: &FunctionInstance,
        found: Option<(Point, Point)>,
        algorithm: &str,
        interpretation: Option<String>,
        params: &AttackParams,
    ) -> Result<AttackResult> {
        let verdict = match found {
            Some((x, y)) => Verdict::ViolationFound { x, y, source: WitnessSource::Algorithm },
            None => match params.pair_scan.then(|| self.session.scan_pairs()).flatten() {
                Some((x, y)) => Verdict::ViolationFound { x, y, source: WitnessSource::PairScan },
                None => Verdict::NoViolation,
            },
        };
        reverify(f, &verdict)?;
        if !verdict.is_violation() {
            self.halt("no violation found");
        }
        let budget = self.session.budget();
        Ok(AttackResult {
            algorithm: algorithm.into(),
            interpretation,
            verdict,
            trace: self.trace,
            budget,
            query_cap: Some(params.query_cap(f.n())),
            outcome: self.session.into_outcome(),
        })
    }
}

fn union(sets: impl Iterator<Item = Vec<u32>>) -> Vec<u32> {
    let mut all: Vec<u32> = sets.flatten().collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Splits `v` into `k` nearly equal consecutive parts.
fn split(v: &[u32], k: usize) -> Vec<Vec<u32>> {
    let (q, r) = (v.len() / k, v.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let len = q + usize::from(i < r);
        out.push(v[at..at + len].to_vec());
        at += len;
    }
    out.retain(|p| !p.is_empty());
    out
}

/// The comparable pair `(a, b)` ordered as a violation, if it is one.
fn violation(a: &Point, va: bool, b: &Point, vb: bool) -> Option<(Point, Point)> {
    if a.precedes(b) && va && !vb {
        Some((a.clone(), b.clone()))
    } else if b.precedes(a) && vb && !va {
        Some((b.clone(), a.clone()))
    } else {
        None
    }
}

/// Checks a reported violation with two fresh evaluations outside the budget.
fn reverify<F: BooleanFunction + ?Sized>(f: &F, v: &Verdict) -> Result<()> {
    if let Verdict::ViolationFound { x, y, .. } = v {
        if !(x.precedes(y) && f.eval(x) && !f.eval(y)) {
            return Err(Error::InconsistentResponse(format!("reported violation ({x}, {y}) does not verify")));
        }
    }
    Ok(())
}

fn require_no_variant(f: &FunctionInstance, what: &str, cwx: bool) -> Result<()> {
    if f.regime() != Regime::Middle {
        return Err(Error::VariantMismatch(format!("{what} needs a middle-layer instance")));
    }
    if cwx != matches!(f.variant(), Variant::CwxNo) && !f.variant().is_yes() {
        return Err(Error::VariantMismatch(format!("{what} does not apply to {} instances", f.variant().name())));
    }
    Ok(())
}

/// Level-by-level chain shared by the general and three-level attacks.
fn chain_attack<R: Rng + ?Sized>(
    f: &FunctionInstance,
    rng: &mut R,
    params: &AttackParams,
    algorithm: &str,
    interpretation: Option<String>,
) -> Result<AttackResult> {
    let levels = f.levels();
    let mut eng = Engine::new(f, params.budget(f.n(), levels as u32 + 3), params.track_outcome, rng);
    let found = chain_rounds(&mut eng, params, levels)?;
    eng.conclude(f, found, algorithm, interpretation, params)
}

fn chain_rounds(eng: &mut Engine<'_>, params: &AttackParams, levels: usize) -> Result<Option<(Point, Point)>> {
    let Some((x, a)) = eng.bootstrap(params.restarts, 1)? else {
        eng.halt("no start with a unique first-level activation");
        return Ok(None);
    };
    let route = a.route().unwrap().to_vec();
    let id = eng.fresh_id();
    eng.trace.push(TraceEvent::Event { id, parent: None, j: 1, held: true });
    let free = eng.probe_free(&x, &x.ones_coords(), params.round0, params.probe, &route, "round 0")?;
    if free.is_empty() {
        eng.halt("round 0 found no free coordinates");
        return Ok(None);
    }
    let mut live = vec![Rep { id, x: x.clone(), route, free, cand: x.zeros_coords(), value: a.value }];
    for j in 1..levels {
        live = eng.descend(&live, j, params)?;
        if live.is_empty() {
            eng.halt(&format!("event E_{} held in no repetition", j + 1));
            return Ok(None);
        }
    }
    eng.finish(&live, params, levels as u32 + 1)
}

/// The general `(2ℓ+1)`-round attack on a `2ℓ`-level instance.
pub fn attack_general<R: Rng + ?Sized>(
    f: &FunctionInstance,
    ell: usize,
    rng: &mut R,
    params: &AttackParams,
) -> Result<AttackResult> {
    require_no_variant(f, "attack_general", false)?;
    if f.levels() != 2 * ell {
        return Err(Error::VariantMismatch(format!("instance has {} levels, expected {}", f.levels(), 2 * ell)));
    }
    chain_attack(f, rng, params, "general", None)
}

/// Three-level target: terms, clauses, terms, then leaves, with full-size arities
/// `2^√n` and literal size `√n` unless overridden.
pub fn three_level_spec(n: u32, arity: Option<u64>, literal_size: Option<u32>, seed: Seed) -> Result<MultiplexerSpec> {
    let r = isqrt(n);
    let a = arity.unwrap_or_else(|| 1u64 << r.min(62));
    MultiplexerSpec::with_any_levels(n, vec![a; 3], literal_size.unwrap_or(r), seed)
}

pub const THREE_LEVEL_INTERPRETATION: &str = "three alternation levels (term, clause, term) above the leaves";

/// The four-round attack on the three-level no-variant.
pub fn attack_three_level<R: Rng + ?Sized>(
    f: &FunctionInstance,
    rng: &mut R,
    params: &AttackParams,
) -> Result<AttackResult> {
    require_no_variant(f, "attack_three_level", false)?;
    if f.levels() != 3 {
        return Err(Error::VariantMismatch(format!("instance has {} levels, expected 3", f.levels())));
    }
    chain_attack(f, rng, params, "three-level", Some(THREE_LEVEL_INTERPRETATION.into()))
}

/// The three-round attack that skips straight to the last level when every
/// leaf has its own secret.
pub fn attack_cwx_skip<R: Rng + ?Sized>(
    f: &FunctionInstance,
    rng: &mut R,
    params: &AttackParams,
) -> Result<AttackResult> {
    if !matches!(f.variant(), Variant::CwxNo) {
        return Err(Error::VariantMismatch(format!("attack_cwx_skip needs a cwx-no instance, got {}", f.variant().name())));
    }
    let levels = f.levels();
    if levels < 2 {
        return Err(Error::VariantMismatch("attack_cwx_skip needs at least two levels".into()));
    }
    let mut eng = Engine::new(f, params.budget(f.n(), 5), params.track_outcome, rng);
    let found = cwx_rounds(&mut eng, params, levels)?;
    eng.conclude(f, found, "cwx", None, params)
}

fn cwx_rounds(eng: &mut Engine<'_>, params: &AttackParams, levels: usize) -> Result<Option<(Point, Point)>> {
    let pen = levels - 1;
    let Some((x, a)) = eng.bootstrap(params.restarts, pen)? else {
        eng.halt("no start stopping at the penultimate level");
        return Ok(None);
    };
    let route = a.route().unwrap().to_vec();
    let root = eng.fresh_id();
    eng.trace.push(TraceEvent::Event { id: root, parent: None, j: pen as u32, held: true });
    let zeros = x.zeros_coords();
    let c0 = eng.probe_free(&x, &zeros, params.round0, params.probe, &route, "round 0")?;
    if c0.is_empty() {
        eng.halt("round 0 found no free zeros");
        return Ok(None);
    }
    let ones = x.ones_coords();
    let inner = params.inner.first().copied().unwrap_or(0);
    let mut b = eng.open()?;
    let mut spawned = Vec::new();
    for _ in 0..params.reps {
        let id = eng.fresh_id();
        let mut rng = eng.rng("rep", id);
        // The step set comes from the verified-free zeros so that it cannot
        // undo the penultimate clause; the rest of C_0 stays zero in y.
        let r = sample_subset(&c0, (params.step as usize).min(c0.len().saturating_sub(1)), &mut rng);
        let cand: Vec<u32> = c0.iter().copied().filter(|i| !r.contains(i)).collect();
        let y = x.flip_coords(&r);
        let Some(ty) = b.submit(y.clone()) else { break };
        let mut probes = Vec::new();
        for _ in 0..inner {
            let s = sample_subset(&ones, (params.probe as usize).min(ones.len()), &mut rng);
            match b.submit(y.flip_coords(&s)) {
                Some(t) => probes.push((s, t)),
                None => break,
            }
        }
        spawned.push((id, y, ty, probes, cand));
    }
    let ans = eng.reveal(b, "round 1")?;
    let mut live = Vec::new();
    for (id, y, ty, probes, cand) in spawned {
        let a = ans.get(ty);
        let held = a.follows(&route) && a.stops_at(levels, levels) && a.value;
        eng.trace.push(TraceEvent::Event { id, parent: Some(root), j: levels as u32, held });
        if !held {
            continue;
        }
        let yr = a.route().unwrap().to_vec();
        let free = union(probes.into_iter().filter(|(_, t)| ans.get(*t).route() == Some(yr.as_slice())).map(|(s, _)| s));
        live.push(Rep { id, x: y, route: yr, free, cand, value: true });
    }
    if live.is_empty() {
        eng.halt("no repetition reached a leaf with value 1");
        return Ok(None);
    }
    eng.finish(&live, params, 4)
}

/// Non-adaptive edge tester: `edges` uniform hypercube edges, two queries each.
pub fn edge_tester<F: BooleanFunction + ?Sized, R: Rng + ?Sized>(
    f: &F,
    edges: u64,
    rng: &mut R,
) -> Result<AttackResult> {
    let n = f.n();
    let oracle = ValueOracle(f);
    let mut s = Session::new(&oracle, RoundBudget::new(1, 2 * edges), false);
    let mut b = s.open_round()?;
    let mut pairs = Vec::new();
    for _ in 0..edges {
        let x = sample_uniform(n, rng);
        let i = rng.random_range(1..=n);
        let (lo, hi) = (x.with(i, false), x.with(i, true));
        let tl = b.submit(lo.clone()).expect("budget covers every edge");
        let th = b.submit(hi.clone()).expect("budget covers every edge");
        pairs.push((lo, hi, tl, th));
    }
    let ans = s.reveal(b)?;
    let found = pairs.into_iter().find_map(|(lo, hi, tl, th)| violation(&lo, ans.get(tl).value, &hi, ans.get(th).value));
    baseline_result(f, s, found, "edge")
}

/// Pair tester schedule: distance `2^k` with `k` uniform in `0..=log2(√n)`.
pub fn pair_scales(n: u32) -> Vec<u32> {
    let top = isqrt(n).max(1).ilog2();
    (0..=top).map(|k| 1 << k).collect()
}

/// Non-adaptive pair tester: `pairs` pairs `x ≺ x^T` with `T` a random set of
/// zeros of `x` whose size is drawn from [`pair_scales`].
pub fn pair_tester<F: BooleanFunction + ?Sized, R: Rng + ?Sized>(
    f: &F,
    pairs: u64,
    rng: &mut R,
) -> Result<AttackResult> {
    let n = f.n();
    let scales = pair_scales(n);
    let oracle = ValueOracle(f);
    let mut s = Session::new(&oracle, RoundBudget::new(1, 2 * pairs), false);
    let mut b = s.open_round()?;
    let mut queued = Vec::new();
    for _ in 0..pairs {
        let x = sample_uniform(n, rng);
        let k = scales[rng.random_range(0..scales.len())];
        let zeros = x.zeros_coords();
        let t = sample_subset(&zeros, (k as usize).min(zeros.len()), rng);
        let y = x.flip_coords(&t);
        let tx = b.submit(x.clone()).expect("budget covers every pair");
        let ty = b.submit(y.clone()).expect("budget covers every pair");
        queued.push((x, y, tx, ty));
    }
    let ans = s.reveal(b)?;
    let found = queued.into_iter().find_map(|(x, y, tx, ty)| violation(&x, ans.get(tx).value, &y, ans.get(ty).value));
    baseline_result(f, s, found, "pair")
}

fn baseline_result<F: BooleanFunction + ?Sized>(
    f: &F,
    s: Session<'_>, found: Option<(Point, Point)>, name: &str) -> Result<AttackResult> {
    let verdict = match found {
        Some((x, y)) => Verdict::ViolationFound { x, y, source: WitnessSource::Algorithm },
        None => Verdict::NoViolation,
    };
    reverify(f, &verdict)?;
    let budget = s.budget();
    Ok(AttackResult {
        algorithm: name.into(),
        interpretation: None,
        verdict,
        trace: Vec::new(),
        budget,
        query_cap: None,
        outcome: s.into_outcome(),
    })
}

/// Testers runnable in the distinguishing game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tester", rename_all = "snake_case")]
pub enum Tester {
    AlwaysAccept,
    General { params: AttackParams },
    Edge,
    Pair,
}

impl Tester {
    pub fn name(&self) -> &'static str {
        match self {
            Tester::AlwaysAccept => "always-accept",
            Tester::General { .. } => "general",
            Tester::Edge => "edge",
            Tester::Pair => "pair",
        }
    }

    /// Runs with at most `budget` queries; `None` for always-accept.
    pub fn run<R: Rng + ?Sized>(&self, f: &FunctionInstance, budget: u64, rng: &mut R) -> Result<Option<AttackResult>> {
        Ok(match self {
            Tester::AlwaysAccept => None,
            Tester::General { params } => {
                let mut p = params.clone();
                p.max_queries = Some(budget);
                p.track_outcome = true;
                Some(chain_attack(f, rng, &p, "general", None)?)
            }
            Tester::Edge => Some(edge_tester(f, budget / 2, rng)?),
            Tester::Pair => Some(pair_tester(f, budget / 2, rng)?),
        })
    }
}

/// Acceptance gap between matched yes and no instances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistinguishReport {
    pub tester: String,
    pub n: u32,
    pub ell: usize,
    pub budget: u64,
    pub yes_accept: Rate,
    pub no_accept: Rate,
    pub advantage: f64,
    /// Difference of the two Wilson intervals' far endpoints.
    pub advantage_ci: (f64, f64),
    /// Safe and good frequencies of outcomes on yes runs that tracked one.
    pub yes_safe: Option<Rate>,
    pub yes_good: Option<Rate>,
}

/// Yes accepted, no accepted, and (safe, good) of the yes outcome.
type SeedRun = (bool, bool, Option<(bool, bool)>);

/// Runs `tester` on `seeds` matched yes/no pairs over full-size trees.
pub fn distinguish_experiment(
    tester: &Tester,
    budget: u64,
    n: u32,
    ell: usize,
    seeds: u64,
    master: &Seed,
) -> Result<DistinguishReport> {
    let runs: Vec<SeedRun> = (0..seeds)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let spec = MultiplexerSpec::paper(n, ell, master.derive("spec", i))?;
            let yes = FunctionInstance::new(spec.clone(), Variant::Yes, master.derive("yes-leaves", i))?;
            let no = FunctionInstance::sample_no(spec, master.derive("no-leaves", i))?;
            let ry = tester.run(&yes, budget, &mut master.derive("yes-run", i).rng())?;
            let rn = tester.run(&no, budget, &mut master.derive("no-run", i).rng())?;
            let accepts = |r: &Option<AttackResult>| r.as_ref().is_none_or(|r| !r.verdict.is_violation());
            let health = ry.as_ref().and_then(|r| r.outcome.as_ref()).map(|o| {
                (o.is_safe(DEFAULT_TAU), o.is_good(GoodParams::default()))
            });
            Ok((accepts(&ry), accepts(&rn), health))
        })
        .collect::<Result<_>>()?;
    let count = |p: &dyn Fn(&SeedRun) -> bool| runs.iter().filter(|r| p(r)).count() as u64;
    let yes_accept = Rate::new(count(&|r| r.0), seeds);
    let no_accept = Rate::new(count(&|r| r.1), seeds);
    let tracked = count(&|r| r.2.is_some());
    let (yes_safe, yes_good) = if tracked > 0 {
        (
            Some(Rate::new(count(&|r| r.2.is_some_and(|h| h.0)), tracked)),
            Some(Rate::new(count(&|r| r.2.is_some_and(|h| h.1)), tracked)),
        )
    } else {
        (None, None)
    };
    Ok(DistinguishReport {
        tester: tester.name().into(),
        n,
        ell,
        budget,
        advantage: yes_accept.rate - no_accept.rate,
        advantage_ci: (yes_accept.ci_low - no_accept.ci_high, yes_accept.ci_high - no_accept.ci_low),
        yes_accept,
        no_accept,
        yes_safe,
        yes_good,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::talagrand::FnFunction;

    fn instance(n: u32, ell: usize, variant: &str, seed: u64) -> FunctionInstance {
        let spec = MultiplexerSpec::paper(n, ell, Seed::from_u64(seed)).unwrap();
        match variant {
            "yes" => FunctionInstance::new(spec, Variant::Yes, Seed::from_u64(seed + 100)).unwrap(),
            _ => FunctionInstance::sample_no(spec, Seed::from_u64(seed + 100)).unwrap(),
        }
    }

    #[test]
    fn paper_schedules() {
        let p = AttackParams::paper_three_level(256);
        assert_eq!((p.round0, p.reps, p.inner.clone(), p.parts, p.block), (8, 2, vec![4, 2], 2, 16));
        let g = AttackParams::paper_general(256, 1);
        assert_eq!((g.round0, g.reps, g.inner.clone(), g.parts), (6, 3, vec![3], 3));
        let c = AttackParams::paper_cwx(64);
        assert_eq!((c.round0, c.reps, c.inner.clone(), c.parts, c.probe), (4, 2, vec![2], 2, 8));
        assert_eq!(round_pow(2, 0.01), 1);
    }

    #[test]
    fn split_is_a_partition() {
        let v: Vec<u32> = (1..=10).collect();
        let parts = split(&v, 3);
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(parts.concat(), v);
        assert_eq!(split(&v[..2], 5).len(), 2);
    }

    #[test]
    fn one_batch_open_at_a_time() {
        let f = instance(16, 1, "yes", 1);
        let mut s = Session::new(&f, RoundBudget::new(2, 10), false);
        let b = s.open_round().unwrap();
        assert!(matches!(s.open_round(), Err(Error::RoundDiscipline(_))));
        s.reveal(b).unwrap();
        let b = s.open_round().unwrap();
        s.reveal(b).unwrap();
        assert_eq!(s.open_round().unwrap_err(), Error::RoundsExhausted { allowed: 2 });
    }

    #[test]
    #[should_panic(expected = "round discipline")]
    fn tickets_only_redeem_in_their_batch() {
        let f = instance(16, 1, "yes", 1);
        let mut s = Session::new(&f, RoundBudget::new(2, 10), false);
        let mut b0 = s.open_round().unwrap();
        b0.submit(Point::zeros(16).flip_coords(&(1..=8).collect::<Vec<_>>())).unwrap();
        let a0 = s.reveal(b0).unwrap();
        let mut b1 = s.open_round().unwrap();
        let t1 = b1.submit(Point::zeros(16).flip_coords(&(9..=16).collect::<Vec<_>>())).unwrap();
        let _ = a0.get(t1);
    }

    #[test]
    fn budget_caps_submissions() {
        let f = instance(16, 1, "yes", 2);
        let mut s = Session::new(&f, RoundBudget::new(3, 3), true);
        let mut b = s.open_round().unwrap();
        let x = Point::zeros(16).flip_coords(&[1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(b.submit(x.clone()).is_some());
        assert!(b.submit(x.flip_coords(&[1])).is_some());
        s.reveal(b).unwrap();
        let mut b = s.open_round().unwrap();
        assert!(b.submit(x.flip_coords(&[2])).is_some());
        assert!(b.submit(x.flip_coords(&[3])).is_none());
        s.reveal(b).unwrap();
        assert_eq!(s.budget().queries_used, 3);
        assert_eq!(s.into_outcome().unwrap().queries().len(), 3);
    }

    #[test]
    fn out_of_layer_answers_are_truncated() {
        let f = instance(16, 1, "yes", 3);
        let mut s = Session::new(&f, RoundBudget::new(1, 2), true);
        let mut b = s.open_round().unwrap();
        let lo = b.submit(Point::zeros(16)).unwrap();
        let hi = b.submit(Point::ones(16)).unwrap();
        let a = s.reveal(b).unwrap();
        assert_eq!((a.get(lo).value, a.get(hi).value), (false, true));
        assert!(a.get(lo).strong.is_none());
        assert!(s.into_outcome().unwrap().queries().is_empty());
    }

    #[test]
    fn attacks_are_one_sided() {
        for seed in 0..6 {
            let f = instance(64, 1, "yes", seed);
            let mut rng = Seed::from_u64(seed).rng();
            let r = attack_general(&f, 1, &mut rng, &AttackParams::desk_general(64, 1)).unwrap();
            assert_eq!(r.verdict, Verdict::NoViolation);
            let r = attack_general(&f, 1, &mut rng, &AttackParams::paper_general(64, 1)).unwrap();
            assert_eq!(r.verdict, Verdict::NoViolation);
            assert!(!edge_tester(&f, 200, &mut rng).unwrap().verdict.is_violation());
            assert!(!pair_tester(&f, 200, &mut rng).unwrap().verdict.is_violation());
            let spec = three_level_spec(64, None, None, Seed::from_u64(seed)).unwrap();
            let g = FunctionInstance::new(spec, Variant::Yes, Seed::from_u64(seed)).unwrap();
            let r = attack_three_level(&g, &mut rng, &AttackParams::desk_three_level(64)).unwrap();
            assert_eq!(r.verdict, Verdict::NoViolation);
            assert_eq!(r.interpretation.as_deref(), Some(THREE_LEVEL_INTERPRETATION));
        }
    }

    #[test]
    fn cwx_rejects_other_variants() {
        let f = instance(64, 1, "yes", 1);
        let err = attack_cwx_skip(&f, &mut Seed::from_u64(1).rng(), &AttackParams::desk_cwx(64)).unwrap_err();
        assert!(matches!(err, Error::VariantMismatch(_)));
        let g = instance(64, 1, "no", 1);
        assert!(attack_three_level(&g, &mut Seed::from_u64(1).rng(), &AttackParams::desk_three_level(64)).is_err());
        assert!(attack_general(&g, 2, &mut Seed::from_u64(1).rng(), &AttackParams::desk_general(64, 2)).is_err());
    }

    #[test]
    fn edge_tester_catches_anti_dictator() {
        let n = 16;
        let f = FnFunction { n, f: |x: &Point| !x.get(1) };
        let rejects = (0..1000)
            .filter(|&s| edge_tester(&f, 8 * n as u64, &mut Seed::from_u64(s).rng()).unwrap().verdict.is_violation())
            .count();
        assert!(rejects >= 950, "{rejects}");
        let r = edge_tester(&f, 0, &mut Seed::from_u64(0).rng()).unwrap();
        assert_eq!((r.verdict, r.budget.queries_used), (Verdict::NoViolation, 0));
        assert!(pair_tester(&f, 0, &mut Seed::from_u64(0).rng()).unwrap().verdict == Verdict::NoViolation);
    }

    #[test]
    fn pair_scales_follow_sqrt_n() {
        assert_eq!(pair_scales(64), vec![1, 2, 4, 8]);
        assert_eq!(pair_scales(256), vec![1, 2, 4, 8, 16]);
        assert_eq!(pair_scales(9), vec![1, 2]);
    }

    fn check_trace(r: &AttackResult) {
        let mut held = std::collections::BTreeMap::new();
        for e in &r.trace {
            if let TraceEvent::Event { id, parent, held: h, .. } = e {
                if let Some(p) = parent {
                    assert_eq!(held.get(p), Some(&true), "event {id} extends a repetition where the previous event failed");
                }
                held.insert(*id, *h);
            }
        }
        assert!(r.budget.queries_used <= r.query_cap.unwrap());
        assert!(r.budget.rounds_used <= r.budget.rounds_allowed);
    }

    #[test]
    fn no_instance_runs_keep_their_contracts() {
        let mut found = 0;
        for seed in 0..40 {
            let f = instance(64, 1, "no", seed);
            let r = attack_general(&f, 1, &mut Seed::from_u64(seed).rng(), &AttackParams::desk_general(64, 1)).unwrap();
            check_trace(&r);
            if let Verdict::ViolationFound { x, y, .. } = &r.verdict {
                assert!(x.precedes(y) && f.eval(x) && !f.eval(y));
                found += 1;
            }
            let spec = three_level_spec(64, None, None, Seed::from_u64(seed)).unwrap();
            let g = FunctionInstance::new(spec, Variant::CwxNo, Seed::from_u64(seed)).unwrap();
            let r = attack_cwx_skip(&g, &mut Seed::from_u64(seed).rng(), &AttackParams::desk_cwx(64)).unwrap();
            check_trace(&r);
            assert!(r.budget.rounds_allowed == 5);
        }
        assert!(found > 0);
    }

    #[test]
    fn attacks_are_deterministic() {
        let f = instance(64, 1, "no", 7);
        let p = AttackParams::desk_general(64, 1);
        let a = attack_general(&f, 1, &mut Seed::from_u64(3).rng(), &p).unwrap();
        let b = attack_general(&f, 1, &mut Seed::from_u64(3).rng(), &p).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn budget_truncation_tracks_outcome() {
        let f = instance(64, 1, "yes", 4);
        let mut p = AttackParams::desk_general(64, 1);
        p.max_queries = Some(1);
        p.track_outcome = true;
        let r = attack_general(&f, 1, &mut Seed::from_u64(0).rng(), &p).unwrap();
        assert_eq!(r.budget.queries_used, 1);
        assert_eq!(r.outcome.unwrap().queries().len(), 1);
    }

    #[test]
    fn always_accept_has_no_advantage() {
        let r = distinguish_experiment(&Tester::AlwaysAccept, 10, 16, 1, 20, &Seed::from_u64(1)).unwrap();
        assert_eq!(r.advantage, 0.0);
        assert!(r.advantage_ci.0 <= 0.0 && r.advantage_ci.1 >= 0.0);
        assert!(r.yes_good.is_none());
    }

    #[test]
    fn attacks_never_read_secrets() {
        let src = include_str!("attacks.rs");
        let body = &src[..src.find("#[cfg(test)]").unwrap()];
        for forbidden in ["secret_of", "leaf_secret_of", "leaf_function", "LeafFunction"] {
            assert!(!body.contains(forbidden), "attack code mentions {forbidden}");
        }
    }
}
