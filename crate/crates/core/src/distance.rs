//! Distance to monotonicity: the disjoint-pairs lower bound, an exact min-cut
//! oracle for small `n`, a maximum-matching bound, the secret-direction edge
//! estimator for no-instances, and the relative-error unate bound.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{sample_subset, sample_uniform, Point};
use crate::multiplexer::Gamma;
use crate::stats::{binomial, wilson};
use crate::talagrand::{BooleanFunction, FunctionInstance, LeafFunction, Regime, Variant};

/// Default largest `n` accepted by [`exact_distance`].
pub const DEFAULT_EXACT_LIMIT: u32 = 14;

/// An explicit function on `{0,1}^n` for small `n`, indexed by [`Point::to_index`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    n: u32,
    bits: Vec<bool>,
}

impl TruthTable {
    pub fn new(n: u32, bits: Vec<bool>) -> Result<TruthTable> {
        if n > 24 || bits.len() != 1usize << n {
            return Err(Error::InvalidSpec(format!("truth table of length {} for n = {n}", bits.len())));
        }
        Ok(TruthTable { n, bits })
    }

    pub fn from_fn<F: BooleanFunction + ?Sized>(f: &F) -> TruthTable {
        let n = f.n();
        assert!(n <= 24, "truth tables are limited to n <= 24");
        TruthTable { n, bits: (0..1u64 << n).map(|i| f.eval(&Point::from_index(n, i))).collect() }
    }

    pub fn bit(&self, index: u64) -> bool {
        self.bits[index as usize]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_monotone(&self) -> bool {
        (0..1u64 << self.n).all(|x| {
            !self.bit(x) || (0..self.n).all(|b| x >> b & 1 == 1 || self.bit(x | 1 << b))
        })
    }
}

impl BooleanFunction for TruthTable {
    fn n(&self) -> u32 {
        self.n
    }

    fn eval(&self, x: &Point) -> bool {
        self.bits[x.to_index() as usize]
    }
}

/// A pair `x ≺ y` with `f(x) = 1` and `f(y) = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViolationPair {
    pub x: Point,
    pub y: Point,
}

impl ViolationPair {
    /// Checks comparability and the strict violation against `f`.
    pub fn new<F: BooleanFunction + ?Sized>(f: &F, x: Point, y: Point) -> Result<ViolationPair> {
        if !x.precedes(&y) {
            return Err(Error::NotViolating(format!("{x} does not strictly precede {y}")));
        }
        if !f.eval(&x) || f.eval(&y) {
            return Err(Error::NotViolating(format!("values at {x} and {y} are not (1, 0)")));
        }
        Ok(ViolationPair { x, y })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Exact,
    MatchingLowerBound,
    SampledEdgeLowerBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub kind: DistanceKind,
    pub sample_size: Option<u64>,
    pub ci: Option<(f64, f64)>,
}

impl DistanceEstimate {
    fn exact(value: f64, kind: DistanceKind) -> Self {
        DistanceEstimate { value, kind, sample_size: None, ci: None }
    }
}

/// `|pairs| / 2^n` after checking that the pairs are violating and vertex-disjoint.
pub fn fln_bound<F: BooleanFunction + ?Sized>(f: &F, pairs: &[ViolationPair]) -> Result<DistanceEstimate> {
    let mut seen = HashSet::new();
    for p in pairs {
        ViolationPair::new(f, p.x.clone(), p.y.clone())?;
        if !seen.insert(p.x.clone()) || !seen.insert(p.y.clone()) {
            return Err(Error::NotDisjoint);
        }
    }
    Ok(DistanceEstimate::exact(pairs.len() as f64 / 2f64.powi(f.n() as i32), DistanceKind::MatchingLowerBound))
}

/// Exact distance and a closest monotone function.
#[derive(Clone, Debug)]
pub struct ExactDistance {
    pub estimate: DistanceEstimate,
    /// Number of points on which `f` and the witness differ.
    pub changes: u64,
    pub witness: TruthTable,
}

/// Exact distance to the nearest monotone function via a closure min-cut.
pub fn exact_distance<F: BooleanFunction + ?Sized>(f: &F, exact_limit: u32) -> Result<DistanceEstimate> {
    exact_distance_with_witness(f, exact_limit).map(|d| d.estimate)
}

/// The up-set `U = g^{-1}(1)` is the source side of a cut. Unit arcs source→x
/// for `f(x)=1` pay for dropping x from U; unit arcs x→sink for `f(x)=0` pay
/// for adding it; infinite arcs x→x∪{i} forbid U from failing upward closure.
pub fn exact_distance_with_witness<F: BooleanFunction + ?Sized>(f: &F, exact_limit: u32) -> Result<ExactDistance> {
    let n = f.n();
    if n > exact_limit || n > 24 {
        return Err(Error::ExactLimit { n, limit: exact_limit.min(24) });
    }
    let table = TruthTable::from_fn(f);
    let size = 1usize << n;
    let (s, t) = (size, size + 1);
    let mut g = FlowGraph::new(size + 2);
    for x in 0..size {
        if table.bits[x] {
            g.add_edge(s, x, 1);
        } else {
            g.add_edge(x, t, 1);
        }
        for b in 0..n {
            if x >> b & 1 == 0 {
                g.add_edge(x, x | 1 << b, INF);
            }
        }
    }
    let cut = g.max_flow(s, t);
    let side = g.source_side(s);
    let witness = TruthTable { n, bits: side[..size].to_vec() };
    debug_assert!(witness.is_monotone());
    let changes = (0..size).filter(|&x| witness.bits[x] != table.bits[x]).count() as u64;
    debug_assert_eq!(changes, cut);
    Ok(ExactDistance {
        estimate: DistanceEstimate::exact(cut as f64 / size as f64, DistanceKind::Exact),
        changes,
        witness,
    })
}

const INF: u64 = u64::MAX / 4;

/// Dinic's algorithm on an adjacency-list residual graph.
struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u64>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph { head: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new() }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: u64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }

    fn bfs(&self, s: usize, level: &mut [i32]) {
        level.fill(-1);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: u64, level: &[i32], it: &mut [usize]) -> u64 {
        if u == t {
            return pushed;
        }
        while it[u] < self.head[u].len() {
            let e = self.head[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, pushed.min(self.cap[e]), level, it);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[u] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let nodes = self.head.len();
        let mut level = vec![-1; nodes];
        let mut flow = 0;
        loop {
            self.bfs(s, &mut level);
            if level[t] < 0 {
                return flow;
            }
            let mut it = vec![0; nodes];
            loop {
                let f = self.dfs(s, t, INF, &level, &mut it);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph.
    fn source_side(&self, s: usize) -> Vec<bool> {
        let mut level = vec![-1; self.head.len()];
        self.bfs(s, &mut level);
        level.iter().map(|&l| l >= 0).collect()
    }
}

/// Maximum set of vertex-disjoint violating pairs (Hopcroft–Karp on the
/// bipartite graph from `f^{-1}(1)` to `f^{-1}(0)` with an edge per comparable violation).
pub fn max_violation_matching<F: BooleanFunction + ?Sized>(f: &F) -> Result<Vec<ViolationPair>> {
    let n = f.n();
    if n > 16 {
        return Err(Error::ExactLimit { n, limit: 16 });
    }
    let table = TruthTable::from_fn(f);
    let size = 1u64 << n;
    let full = size - 1;
    let left: Vec<u64> = (0..size).filter(|&x| table.bit(x)).collect();
    let mut right_id = vec![usize::MAX; size as usize];
    let mut right: Vec<u64> = Vec::new();
    for y in (0..size).filter(|&y| !table.bit(y)) {
        right_id[y as usize] = right.len();
        right.push(y);
    }
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|&x| {
            let free = full & !x;
            let mut out = Vec::new();
            let mut sub = free;
            // Every strict superset x|sub of x, via submask enumeration.
            while sub != 0 {
                let y = x | sub;
                if !table.bit(y) {
                    out.push(right_id[y as usize]);
                }
                sub = (sub - 1) & free;
            }
            out
        })
        .collect();
    let matching = hopcroft_karp(&adj, right.len());
    Ok(matching
        .into_iter()
        .enumerate()
        .filter_map(|(l, r)| r.map(|r| (l, r)))
        .map(|(l, r)| ViolationPair { x: Point::from_index(n, left[l]), y: Point::from_index(n, right[r]) })
        .collect())
}

/// The matching lower bound `|M| / 2^n`.
pub fn matching_bound<F: BooleanFunction + ?Sized>(f: &F) -> Result<DistanceEstimate> {
    fln_bound(f, &max_violation_matching(f)?)
}

fn hopcroft_karp(adj: &[Vec<usize>], right_len: usize) -> Vec<Option<usize>> {
    const NIL: usize = usize::MAX;
    let l = adj.len();
    let mut match_l = vec![NIL; l];
    let mut match_r = vec![NIL; right_len];
    let mut dist = vec![0u32; l];
    loop {
        let mut queue = std::collections::VecDeque::new();
        let mut found = false;
        for u in 0..l {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = u32::MAX;
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == u32::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        fn augment(
            u: usize,
            adj: &[Vec<usize>],
            match_l: &mut [usize],
            match_r: &mut [usize],
            dist: &mut [u32],
        ) -> bool {
            for k in 0..adj[u].len() {
                let v = adj[u][k];
                let w = match_r[v];
                if w == usize::MAX || (dist[w] == dist[u] + 1 && augment(w, adj, match_l, match_r, dist)) {
                    match_l[u] = v;
                    match_r[v] = u;
                    return true;
                }
            }
            dist[u] = u32::MAX;
            false
        }
        for u in 0..l {
            if match_l[u] == NIL {
                augment(u, adj, &mut match_l, &mut match_r, &mut dist);
            }
        }
    }
    match_l.into_iter().map(|v| (v != NIL).then_some(v)).collect()
}

/// Disjoint-pairs bound from randomly sampled hypercube edges: violating edges
/// found are greedily made vertex-disjoint.
pub fn sampled_edge_bound<F: BooleanFunction + ?Sized, R: Rng + ?Sized>(
    f: &F,
    trials: u64,
    rng: &mut R,
) -> Result<DistanceEstimate> {
    let n = f.n();
    let mut used = HashSet::new();
    let mut pairs = Vec::new();
    for _ in 0..trials {
        let x = sample_uniform(n, rng);
        let i = rng.random_range(1..=n);
        let (lo, hi) = (x.with(i, false), x.with(i, true));
        if f.eval(&lo) && !f.eval(&hi) && !used.contains(&lo) && !used.contains(&hi) {
            used.insert(lo.clone());
            used.insert(hi.clone());
            pairs.push(ViolationPair { x: lo, y: hi });
        }
    }
    let mut est = fln_bound(f, &pairs)?;
    est.kind = DistanceKind::SampledEdgeLowerBound;
    est.sample_size = Some(trials);
    Ok(est)
}

/// Every anti-monotone hypercube edge `(x, x^{i})` with `x_i = 0`, as `(x, i)`.
pub fn violating_edges_exhaustive<F: BooleanFunction + ?Sized>(f: &F) -> Vec<(Point, u32)> {
    let n = f.n();
    assert!(n <= 24, "exhaustive edge scans are limited to n <= 24");
    let table = TruthTable::from_fn(f);
    let mut out = Vec::new();
    for x in 0..1u64 << n {
        if !table.bit(x) {
            continue;
        }
        for b in 0..n {
            if x >> b & 1 == 0 && !table.bit(x | 1 << b) {
                out.push((Point::from_index(n, x), b + 1));
            }
        }
    }
    out
}

/// The violating edges along the secret direction, found exhaustively.
pub fn secret_edges_exhaustive(f: &FunctionInstance) -> Result<Vec<ViolationPair>> {
    let s = f.secret_of().ok_or_else(|| Error::VariantMismatch("instance has no global secret".into()))?;
    let n = f.n();
    if n > 24 {
        return Err(Error::ExactLimit { n, limit: 24 });
    }
    Ok((0..1u64 << n)
        .map(|x| Point::from_index(n, x))
        .filter(|x| !x.get(s))
        .filter_map(|x| {
            let y = x.flip_coords(&[s]);
            (f.eval(&x) && !f.eval(&y)).then_some(ViolationPair { x, y })
        })
        .collect())
}

/// Result of the secret-direction edge estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecretEdgeScan {
    pub estimate: DistanceEstimate,
    pub trials: u64,
    pub hits: u64,
    /// Fraction of sampled edges whose endpoints reach the same leaf.
    pub same_leaf_rate: f64,
    /// Fraction of same-leaf edges whose leaf is an anti-dictator.
    pub anti_given_same_leaf_rate: f64,
    /// Number of edges in the sampled population.
    pub population: f64,
}

/// Samples edges `(x, x^{s})` with `x_s = 0` and `|x|` in `[n/2-√n, n/2+√n-1]`
/// and counts those meeting the three violation conditions.
pub fn secret_edge_scan<R: Rng + ?Sized>(f: &FunctionInstance, trials: u64, rng: &mut R) -> Result<SecretEdgeScan> {
    let s = match f.variant() {
        Variant::No { secret } => secret,
        v => return Err(Error::VariantMismatch(format!("secret edge scan needs a no-instance, got {}", v.name()))),
    };
    let n = f.n();
    let (lo, hi) = f.layer_bounds();
    let weights: Vec<(u32, f64)> = (lo..hi).map(|w| (w, binomial(n - 1, w))).collect();
    let population: f64 = weights.iter().map(|w| w.1).sum();
    let others: Vec<u32> = (1..=n).filter(|&i| i != s).collect();
    let (mut same, mut hits) = (0u64, 0u64);
    for _ in 0..trials {
        let mut r = rng.random::<f64>() * population;
        let w = weights.iter().find(|(_, c)| if r < *c { true } else { r -= c; false }).map_or(hi - 1, |p| p.0);
        let x = Point::from_ones(n, &sample_subset(&others, w as usize, rng)).unwrap();
        let y = x.flip_coords(&[s]);
        let (Gamma::Leaf(u), Gamma::Leaf(v)) = (f.spec().gamma(&x), f.spec().gamma(&y)) else { continue };
        if u != v {
            continue;
        }
        same += 1;
        if let LeafFunction::AntiDictator(_) = f.leaf_function(&u) {
            assert!(f.eval(&x) && !f.eval(&y), "counted edge is not a violation");
            hits += 1;
        }
    }
    let scale = population / 2f64.powi(n as i32);
    let (clo, chi) = wilson(hits, trials);
    Ok(SecretEdgeScan {
        estimate: DistanceEstimate {
            value: hits as f64 / trials.max(1) as f64 * scale,
            kind: DistanceKind::SampledEdgeLowerBound,
            sample_size: Some(trials),
            ci: Some((clo * scale, chi * scale)),
        },
        trials,
        hits,
        same_leaf_rate: same as f64 / trials.max(1) as f64,
        anti_given_same_leaf_rate: if same == 0 { 0.0 } else { hits as f64 / same as f64 },
        population,
    })
}

/// A count that is exact or estimated with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    pub value: f64,
    pub ci: (f64, f64),
    pub exact: bool,
}

/// Directed edge counts along one coordinate of a two-layer function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnateEstimate {
    pub coordinate: u32,
    /// Strictly monotone edges `f(x)=0, f(x^{i})=1`.
    pub monotone_edges: CountEstimate,
    /// Strictly anti-monotone edges `f(x)=1, f(x^{i})=0`.
    pub anti_monotone_edges: CountEstimate,
    pub ones: CountEstimate,
    pub bound: DistanceEstimate,
}

/// Strata larger than this are sampled instead of enumerated.
const UNATE_EXACT_LIMIT: f64 = 200_000.0;

/// Lower bound on the relative distance to unateness along coordinate `i`:
/// `min(|Edges_i^1|, |Edges_i^0|) / |f^{-1}(1)|`.
pub fn unate_bound<R: Rng + ?Sized>(
    f: &FunctionInstance,
    i: u32,
    trials: u64,
    rng: &mut R,
) -> Result<UnateEstimate> {
    if f.regime() != Regime::Sandwich {
        return Err(Error::VariantMismatch("unate bound needs a two-layer instance".into()));
    }
    let n = f.n();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let (lo, _) = f.layer_bounds();
    let others: Vec<u32> = (1..=n).filter(|&j| j != i).collect();
    let mut mono = (0.0, 0.0, 0.0);
    let mut anti = (0.0, 0.0, 0.0);
    let mut exact = true;
    // Only edges whose lower endpoint has weight 3n/4-1, 3n/4 or 3n/4+1 can be non-constant.
    for w in lo.saturating_sub(1)..=lo + 1 {
        let size = binomial(n - 1, w);
        let tally = |x: &Point, m: &mut u64, a: &mut u64| {
            let y = x.flip_coords(&[i]);
            match (f.eval(x), f.eval(&y)) {
                (false, true) => *m += 1,
                (true, false) => *a += 1,
                _ => {}
            }
        };
        let (mut m, mut a) = (0u64, 0u64);
        if size <= UNATE_EXACT_LIMIT && n - 1 <= 63 {
            for idx in crate::talagrand::layer_points(n - 1, w) {
                let coords: Vec<u32> = idx.ones_coords().iter().map(|&k| others[k as usize - 1]).collect();
                tally(&Point::from_ones(n, &coords).unwrap(), &mut m, &mut a);
            }
            mono.0 += m as f64;
            mono.1 += m as f64;
            mono.2 += m as f64;
            anti.0 += a as f64;
            anti.1 += a as f64;
            anti.2 += a as f64;
        } else {
            exact = false;
            for _ in 0..trials {
                let x = Point::from_ones(n, &sample_subset(&others, w as usize, rng)).unwrap();
                tally(&x, &mut m, &mut a);
            }
            let t = trials.max(1) as f64;
            let (ml, mh) = wilson(m, trials);
            let (al, ah) = wilson(a, trials);
            mono.0 += m as f64 / t * size;
            mono.1 += ml * size;
            mono.2 += mh * size;
            anti.0 += a as f64 / t * size;
            anti.1 += al * size;
            anti.2 += ah * size;
        }
    }
    let table = f.samp_table().expect("sandwich instances carry a SAMP table");
    let ones_exact = table.total_ci.0 == table.total_ci.1;
    let ones = CountEstimate { value: table.total, ci: table.total_ci, exact: ones_exact };
    let monotone_edges = CountEstimate { value: mono.0, ci: (mono.1, mono.2), exact };
    let anti_monotone_edges = CountEstimate { value: anti.0, ci: (anti.1, anti.2), exact };
    let bound = DistanceEstimate {
        value: mono.0.min(anti.0) / ones.value,
        kind: if exact && ones_exact { DistanceKind::Exact } else { DistanceKind::SampledEdgeLowerBound },
        sample_size: (!exact).then_some(trials),
        ci: Some((mono.1.min(anti.1) / ones.ci.1, mono.2.min(anti.2) / ones.ci.0.max(1.0))),
    };
    Ok(UnateEstimate { coordinate: i, monotone_edges, anti_monotone_edges, ones, bound })
}
