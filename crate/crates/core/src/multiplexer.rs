//! Lazy multiplexer trees.
//!
//! Terms and clauses are never stored. The literal list of an edge is
//! recomputed on demand from a keyed PRF over the edge's address, so a tree
//! with `arity^levels` leaves costs O(levels) memory. Small hand-built trees
//! use an explicit literal table instead.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use siphasher::sip::SipHasher24;
use std::hash::Hasher;

use crate::error::{Error, Result};
use crate::hypercube::{is_perfect_square, isqrt, LiteralList, Point};
use crate::prf::{absorb, Prf, Seed};

/// Node of the tree as the tuple of child indices from the root (1-based).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeAddress(pub Vec<u64>);

impl NodeAddress {
    pub fn root() -> Self {
        NodeAddress(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, a: u64) -> NodeAddress {
        let mut v = self.0.clone();
        v.push(a);
        NodeAddress(v)
    }

    pub fn parent(&self) -> Option<NodeAddress> {
        if self.0.is_empty() {
            None
        } else {
            Some(NodeAddress(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Last component, i.e. the index of this node among its siblings.
    pub fn last(&self) -> Option<u64> {
        self.0.last().copied()
    }

    /// True when `self` is a (non-strict) prefix of `other`.
    pub fn is_ancestor_of(&self, other: &NodeAddress) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, u) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{u}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("node address must be parenthesized: {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(NodeAddress::root());
        }
        inner
            .split(',')
            .map(|c| c.trim().parse::<u64>().map_err(|e| Error::Parse(format!("node address {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(NodeAddress)
    }
}

impl Serialize for NodeAddress {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The edge `(par(v), v)`, identified by its child endpoint.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct EdgeAddress(pub NodeAddress);

impl EdgeAddress {
    pub fn new(child: NodeAddress) -> Self {
        assert!(!child.is_root(), "an edge needs a non-root child");
        EdgeAddress(child)
    }

    /// Odd-level edges carry terms, even-level edges carry clauses.
    pub fn is_term(&self) -> bool {
        self.0.depth() % 2 == 1
    }
}

/// Outcome of scanning the child edges of one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scan {
    None,
    Unique(u64),
    Multi(u64, u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Leaf,
    NoneActivated,
    MultiActivated(u64, u64),
}

/// The unique activation path `u^0 … u^k` and how it ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationResult {
    pub path: Vec<NodeAddress>,
    pub terminal: Terminal,
}

impl ActivationResult {
    /// `k`, the depth of the last path node.
    pub fn depth(&self) -> usize {
        self.path.len() - 1
    }

    pub fn end(&self) -> &NodeAddress {
        self.path.last().expect("path contains the root")
    }
}

/// Image of the multiplexer map.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gamma {
    Leaf(NodeAddress),
    Star0,
    Star1,
}

impl Gamma {
    pub fn from_activation(r: &ActivationResult) -> Gamma {
        let even = r.depth().is_multiple_of(2);
        match r.terminal {
            Terminal::Leaf => Gamma::Leaf(r.end().clone()),
            Terminal::NoneActivated if even => Gamma::Star0,
            Terminal::NoneActivated => Gamma::Star1,
            Terminal::MultiActivated(..) if even => Gamma::Star1,
            Terminal::MultiActivated(..) => Gamma::Star0,
        }
    }
}

/// Where literal lists come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiteralSource {
    /// PRF-derived literals keyed by the master seed.
    Keyed(Seed),
    /// Explicit literal lists for hand-built fixtures, keyed by child node.
    Table(BTreeMap<NodeAddress, LiteralList>),
}

#[derive(Serialize, Deserialize)]
struct SpecRecord {
    n: u32,
    levels: usize,
    arities: Vec<u64>,
    literal_size: u32,
    source: LiteralSource,
}

/// Parameters of a lazy multiplexer tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord", into = "SpecRecord")]
pub struct MultiplexerSpec {
    n: u32,
    arities: Vec<u64>,
    literal_size: u32,
    source: LiteralSource,
    prf: Option<PrfKey>,
    masks: MaskCache,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct PrfKey(Prf);

/// Literal sets of all children of a node, one bit mask per child.
struct NodeMasks {
    words: usize,
    masks: Vec<u64>,
}

#[derive(Default)]
struct MaskState {
    nodes: HashMap<NodeAddress, Arc<NodeMasks>>,
    visits: HashMap<NodeAddress, u32>,
    bytes: usize,
}

/// Memoized child masks for nodes that are scanned repeatedly. The root is
/// materialized on first use, other nodes on their second scan. Shared by
/// clones of a spec; invisible to equality and serialization.
#[derive(Clone, Default)]
struct MaskCache(Arc<Mutex<MaskState>>);

const MASK_CACHE_BYTES: usize = 256 << 20;
const MASK_NODE_BYTES: usize = 16 << 20;
const MASK_VISIT_ENTRIES: usize = 1 << 20;

impl PartialEq for MaskCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for MaskCache {}

impl fmt::Debug for MaskCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MaskCache(..)")
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

const EDGE_CONTEXT: &str = "mtf multiplexer edge literals v1";

impl From<MultiplexerSpec> for SpecRecord {
    fn from(s: MultiplexerSpec) -> Self {
        SpecRecord {
            n: s.n,
            levels: s.arities.len(),
            arities: s.arities,
            literal_size: s.literal_size,
            source: s.source,
        }
    }
}

impl TryFrom<SpecRecord> for MultiplexerSpec {
    type Error = Error;

    fn try_from(r: SpecRecord) -> Result<Self> {
        if r.levels != r.arities.len() {
            return Err(Error::InvalidSpec(format!(
                "levels {} disagrees with {} arities",
                r.levels,
                r.arities.len()
            )));
        }
        MultiplexerSpec::build(r.n, r.arities, r.literal_size, r.source, true)
    }
}

impl MultiplexerSpec {
    /// Full-size parameters: `2ℓ` levels of arity `2^√n` and literal size `√n`.
    pub fn paper(n: u32, ell: usize, seed: Seed) -> Result<Self> {
        if !is_perfect_square(n) {
            return Err(Error::InvalidSpec(format!("n = {n} is not a perfect square")));
        }
        let r = isqrt(n);
        if r >= 63 {
            return Err(Error::InvalidSpec(format!("arity 2^{r} does not fit in 64 bits")));
        }
        Self::new(n, vec![1u64 << r; 2 * ell], r, seed)
    }

    /// Even level count with explicit arities and literal size.
    pub fn new(n: u32, arities: Vec<u64>, literal_size: u32, seed: Seed) -> Result<Self> {
        Self::build(n, arities, literal_size, LiteralSource::Keyed(seed), false)
    }

    /// Any level count, for the odd-level instances that host the three-level attacks.
    pub fn with_any_levels(n: u32, arities: Vec<u64>, literal_size: u32, seed: Seed) -> Result<Self> {
        Self::build(n, arities, literal_size, LiteralSource::Keyed(seed), true)
    }

    /// Hand-built tree with explicit literal lists for every edge.
    pub fn fixture(n: u32, arities: Vec<u64>, table: BTreeMap<NodeAddress, LiteralList>) -> Result<Self> {
        let s = table.values().map(|l| l.len() as u32).max().unwrap_or(1);
        let spec = Self::build(n, arities, s, LiteralSource::Table(table), true)?;
        spec.check_table()?;
        Ok(spec)
    }

    fn build(n: u32, arities: Vec<u64>, literal_size: u32, source: LiteralSource, any_levels: bool) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidSpec(format!("n = {n} is below 4")));
        }
        if arities.is_empty() || (!any_levels && !arities.len().is_multiple_of(2)) {
            return Err(Error::InvalidSpec(format!("level count {} must be even and >= 2", arities.len())));
        }
        if let Some(a) = arities.iter().find(|&&a| a < 2) {
            return Err(Error::InvalidSpec(format!("arity {a} is below 2")));
        }
        if literal_size == 0 {
            return Err(Error::InvalidSpec("literal size must be >= 1".into()));
        }
        let prf = match &source {
            LiteralSource::Keyed(seed) => Some(PrfKey(Prf::new(seed, EDGE_CONTEXT))),
            LiteralSource::Table(_) => None,
        };
        Ok(MultiplexerSpec { n, arities, literal_size, source, prf, masks: MaskCache::default() })
    }

    fn check_table(&self) -> Result<()> {
        let LiteralSource::Table(table) = &self.source else { return Ok(()) };
        for (node, lits) in table {
            if node.is_root() || node.depth() > self.levels() {
                return Err(Error::InvalidSpec(format!("table entry {node} is not an edge")));
            }
            if node.0.iter().zip(&self.arities).any(|(&u, &a)| u == 0 || u > a) {
                return Err(Error::InvalidSpec(format!("table entry {node} exceeds the arities")));
            }
            if lits.is_empty() || lits.iter().any(|&i| i == 0 || i > self.n) {
                return Err(Error::InvalidSpec(format!("table entry {node} has literals outside [n]")));
            }
        }
        let mut frontier = vec![NodeAddress::root()];
        for &arity in &self.arities {
            let mut next = Vec::new();
            for u in &frontier {
                for a in 1..=arity {
                    let v = u.child(a);
                    if !table.contains_key(&v) {
                        return Err(Error::InvalidSpec(format!("table is missing edge {v}")));
                    }
                    next.push(v);
                }
            }
            if next.len() > 1 << 20 {
                return Err(Error::InvalidSpec("fixture tables are limited to small trees".into()));
            }
            frontier = next;
        }
        Ok(())
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[u64] {
        &self.arities
    }

    /// Arity of the children of a node at depth `depth`.
    pub fn arity_below(&self, depth: usize) -> u64 {
        self.arities[depth]
    }

    pub fn literal_size(&self) -> u32 {
        self.literal_size
    }

    pub fn source(&self) -> &LiteralSource {
        &self.source
    }

    /// Hasher state that has absorbed the domain tag and the path of `u`;
    /// extending it with a child index addresses the edge `(u, u∘a)`.
    fn edge_prefix(&self, u: &NodeAddress) -> Option<SipHasher24> {
        let prf = self.prf?.0;
        let mut h = prf.start(b"edge");
        absorb(&mut h, (u.depth() + 1) as u64);
        for &c in &u.0 {
            absorb(&mut h, c);
        }
        Some(h)
    }

    #[inline]
    fn literal_at(&self, with_child: &SipHasher24, pos: u32) -> u32 {
        let mut h = *with_child;
        absorb(&mut h, pos as u64);
        (h.finish() % self.n as u64) as u32 + 1
    }

    /// The literal list of edge `e`.
    pub fn derive_literals(&self, e: &EdgeAddress) -> LiteralList {
        match &self.source {
            LiteralSource::Table(t) => t.get(&e.0).cloned().unwrap_or_default(),
            LiteralSource::Keyed(_) => {
                let parent = e.0.parent().expect("edge child is non-root");
                let mut h = self.edge_prefix(&parent).expect("keyed spec");
                absorb(&mut h, e.0.last().unwrap());
                (0..self.literal_size).map(|pos| self.literal_at(&h, pos)).collect()
            }
        }
    }

    /// Term satisfied (odd level) or clause falsified (even level).
    pub fn edge_activated(&self, e: &EdgeAddress, x: &Point) -> bool {
        match &self.source {
            LiteralSource::Table(_) => activated_by(e.is_term(), &self.derive_literals(e), x),
            LiteralSource::Keyed(_) => {
                let parent = e.0.parent().expect("edge child is non-root");
                let prefix = self.edge_prefix(&parent).expect("keyed spec");
                self.child_activated(&prefix, e.0.last().unwrap(), e.is_term(), x)
            }
        }
    }

    /// Lazy evaluation: stops at the first literal that decides the edge.
    #[inline]
    fn child_activated(&self, prefix: &SipHasher24, a: u64, is_term: bool, x: &Point) -> bool {
        let mut h = *prefix;
        absorb(&mut h, a);
        // A term is activated iff every literal is 1; a clause iff every literal is 0.
        (0..self.literal_size).all(|pos| x.get(self.literal_at(&h, pos)) == is_term)
    }

    fn activated_child(&self, u: &NodeAddress, prefix: Option<&SipHasher24>, a: u64, x: &Point) -> bool {
        let is_term = (u.depth() + 1) % 2 == 1;
        match prefix {
            Some(p) => self.child_activated(p, a, is_term, x),
            None => activated_by(is_term, &self.derive_literals(&EdgeAddress::new(u.child(a))), x),
        }
    }

    /// Child masks of `u` if cached or due to be cached.
    fn node_masks(&self, u: &NodeAddress) -> Option<Arc<NodeMasks>> {
        let prefix = self.edge_prefix(u)?;
        let arity = self.arities[u.depth()];
        let words = self.n.div_ceil(64) as usize;
        let bytes = arity as usize * words * 8;
        if bytes > MASK_NODE_BYTES {
            return None;
        }
        {
            let mut st = self.masks.0.lock().unwrap();
            if let Some(m) = st.nodes.get(u) {
                return Some(m.clone());
            }
            if st.bytes + bytes > MASK_CACHE_BYTES {
                return None;
            }
            if !u.is_root() {
                if st.visits.len() >= MASK_VISIT_ENTRIES {
                    st.visits.clear();
                }
                let v = st.visits.entry(u.clone()).or_insert(0);
                *v += 1;
                if *v < 2 {
                    return None;
                }
            }
        }
        let mut masks = vec![0u64; arity as usize * words];
        for a in 1..=arity {
            let mut h = prefix;
            absorb(&mut h, a);
            let row = &mut masks[(a as usize - 1) * words..a as usize * words];
            for pos in 0..self.literal_size {
                let k = self.literal_at(&h, pos) - 1;
                row[(k / 64) as usize] |= 1 << (k % 64);
            }
        }
        let m = Arc::new(NodeMasks { words, masks });
        let mut st = self.masks.0.lock().unwrap();
        if !st.nodes.contains_key(u) {
            st.bytes += bytes;
            st.visits.remove(u);
            st.nodes.insert(u.clone(), m.clone());
        }
        Some(m)
    }

    /// Scans children in increasing order, stopping after the second activation.
    pub fn scan_children(&self, u: &NodeAddress, x: &Point) -> Scan {
        assert!(u.depth() < self.levels(), "scan_children on a leaf");
        if let Some(m) = self.node_masks(u) {
            return scan_masks(&m, (u.depth() + 1) % 2 == 1, x);
        }
        let prefix = self.edge_prefix(u);
        let mut first = None;
        for a in 1..=self.arities[u.depth()] {
            if self.activated_child(u, prefix.as_ref(), a, x) {
                match first {
                    None => first = Some(a),
                    Some(a1) => return Scan::Multi(a1, a),
                }
            }
        }
        first.map_or(Scan::None, Scan::Unique)
    }

    /// Every activated child index, in increasing order (full scan, no early exit).
    pub fn scan_children_exhaustive(&self, u: &NodeAddress, x: &Point) -> Vec<u64> {
        assert!(u.depth() < self.levels(), "scan on a leaf");
        let prefix = self.edge_prefix(u);
        (1..=self.arities[u.depth()]).filter(|&a| self.activated_child(u, prefix.as_ref(), a, x)).collect()
    }

    /// Walks down uniquely activated edges from the root.
    pub fn activation_path(&self, x: &Point) -> ActivationResult {
        let mut path = vec![NodeAddress::root()];
        loop {
            let u = path.last().unwrap();
            if u.depth() == self.levels() {
                return ActivationResult { path, terminal: Terminal::Leaf };
            }
            match self.scan_children(u, x) {
                Scan::None => return ActivationResult { path, terminal: Terminal::NoneActivated },
                Scan::Multi(a1, a2) => return ActivationResult { path, terminal: Terminal::MultiActivated(a1, a2) },
                Scan::Unique(a) => {
                    let v = u.child(a);
                    path.push(v);
                }
            }
        }
    }

    pub fn gamma(&self, x: &Point) -> Gamma {
        Gamma::from_activation(&self.activation_path(x))
    }
}

fn scan_masks(m: &NodeMasks, is_term: bool, x: &Point) -> Scan {
    let xw = x.words();
    let mut first = None;
    for (i, row) in m.masks.chunks_exact(m.words).enumerate() {
        // A term needs no literal among the zeros of x; a clause none among the ones.
        let hit = if is_term {
            row.iter().zip(xw).all(|(r, w)| r & !w == 0)
        } else {
            row.iter().zip(xw).all(|(r, w)| r & w == 0)
        };
        if hit {
            let a = i as u64 + 1;
            match first {
                None => first = Some(a),
                Some(a1) => return Scan::Multi(a1, a),
            }
        }
    }
    first.map_or(Scan::None, Scan::Unique)
}

fn activated_by(is_term: bool, lits: &[u32], x: &Point) -> bool {
    lits.iter().all(|&i| x.get(i) == is_term)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two-level tree over n = 4 with arities (2, 2):
    /// T_1 = {1,2}, T_2 = {3,4}; C_{1,1} = {3,4}, C_{1,2} = {2,4};
    /// C_{2,1} = {1}, C_{2,2} = {2}.
    pub fn two_level() -> MultiplexerSpec {
        let node = |v: &[u64]| NodeAddress(v.to_vec());
        let mut t = BTreeMap::new();
        t.insert(node(&[1]), vec![1, 2]);
        t.insert(node(&[2]), vec![3, 4]);
        t.insert(node(&[1, 1]), vec![3, 4]);
        t.insert(node(&[1, 2]), vec![2, 4]);
        t.insert(node(&[2, 1]), vec![1]);
        t.insert(node(&[2, 2]), vec![2]);
        MultiplexerSpec::fixture(4, vec![2, 2], t).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::two_level;
    use super::*;
    use crate::hypercube::{sample_layer, sample_uniform};
    use proptest::prelude::*;
    use rand::Rng;

    fn p(s: &str) -> Point {
        s.parse().unwrap()
    }

    fn node(v: &[u64]) -> NodeAddress {
        NodeAddress(v.to_vec())
    }

    #[test]
    fn derive_literals_is_deterministic() {
        let spec = MultiplexerSpec::paper(16, 1, Seed::from_u64(3)).unwrap();
        let e = EdgeAddress::new(node(&[5, 9]));
        assert_eq!(spec.derive_literals(&e), spec.derive_literals(&e));
        assert_eq!(spec.derive_literals(&e).len(), 4);
    }

    #[test]
    fn literal_frequencies_are_uniform() {
        let spec = MultiplexerSpec::new(16, vec![1 << 20, 1 << 20], 4, Seed::from_u64(11)).unwrap();
        let mut rng = Seed::from_u64(12).rng();
        let mut counts = [0u64; 16];
        let edges = 100_000;
        for _ in 0..edges {
            let a = rng.random_range(1..=1u64 << 20);
            let b = rng.random_range(1..=1u64 << 20);
            let v = if rng.random::<bool>() { node(&[a]) } else { node(&[a, b]) };
            for i in spec.derive_literals(&EdgeAddress::new(v)) {
                counts[i as usize - 1] += 1;
            }
        }
        let total = (edges * 4) as f64;
        for c in counts {
            assert!((c as f64 / total - 1.0 / 16.0).abs() < 0.005);
        }
    }

    #[test]
    fn edge_activation_examples() {
        let mut t = BTreeMap::new();
        t.insert(node(&[1]), vec![1, 2]);
        t.insert(node(&[2]), vec![1, 2]);
        t.insert(node(&[1, 1]), vec![3]);
        t.insert(node(&[1, 2]), vec![3]);
        t.insert(node(&[2, 1]), vec![3]);
        t.insert(node(&[2, 2]), vec![3]);
        let spec = MultiplexerSpec::fixture(4, vec![2, 2], t).unwrap();
        assert!(spec.edge_activated(&EdgeAddress::new(node(&[1])), &p("1100")));
        assert!(!spec.edge_activated(&EdgeAddress::new(node(&[1, 1])), &p("0010")));
        assert!(spec.edge_activated(&EdgeAddress::new(node(&[1, 1])), &p("1100")));
    }

    #[test]
    fn scan_children_fixture() {
        let spec = two_level();
        assert_eq!(spec.scan_children(&NodeAddress::root(), &p("1100")), Scan::Unique(1));
        assert_eq!(spec.scan_children(&NodeAddress::root(), &p("1111")), Scan::Multi(1, 2));
        assert_eq!(spec.scan_children(&NodeAddress::root(), &p("1000")), Scan::None);
    }

    #[test]
    fn activation_path_fixture() {
        let spec = two_level();
        let r = spec.activation_path(&p("1100"));
        assert_eq!(r.path, vec![node(&[]), node(&[1]), node(&[1, 1])]);
        assert_eq!(r.terminal, Terminal::Leaf);
        let r = spec.activation_path(&p("1111"));
        assert_eq!(r.path, vec![node(&[])]);
        assert_eq!(r.terminal, Terminal::MultiActivated(1, 2));
        let r = spec.activation_path(&p("0000"));
        assert_eq!(r.path, vec![node(&[])]);
        assert_eq!(r.terminal, Terminal::NoneActivated);
    }

    #[test]
    fn gamma_fixture() {
        let spec = two_level();
        assert_eq!(spec.gamma(&p("1100")), Gamma::Leaf(node(&[1, 1])));
        assert_eq!(spec.gamma(&p("1111")), Gamma::Star1);
        assert_eq!(spec.gamma(&p("0000")), Gamma::Star0);
    }

    #[test]
    fn gamma_parity_table() {
        let at = |k: usize, terminal| ActivationResult {
            path: (0..=k).map(|d| NodeAddress(vec![1; d])).collect(),
            terminal,
        };
        assert_eq!(Gamma::from_activation(&at(0, Terminal::NoneActivated)), Gamma::Star0);
        assert_eq!(Gamma::from_activation(&at(0, Terminal::MultiActivated(1, 2))), Gamma::Star1);
        assert_eq!(Gamma::from_activation(&at(1, Terminal::NoneActivated)), Gamma::Star1);
        assert_eq!(Gamma::from_activation(&at(1, Terminal::MultiActivated(1, 2))), Gamma::Star0);
    }

    #[test]
    fn spec_validation() {
        assert!(MultiplexerSpec::paper(12, 1, Seed::from_u64(0)).is_err());
        assert!(MultiplexerSpec::new(2, vec![2, 2], 1, Seed::from_u64(0)).is_err());
        assert!(MultiplexerSpec::new(16, vec![2, 2, 2], 4, Seed::from_u64(0)).is_err());
        assert!(MultiplexerSpec::new(16, vec![1, 2], 4, Seed::from_u64(0)).is_err());
        assert!(MultiplexerSpec::with_any_levels(16, vec![4, 4, 4], 4, Seed::from_u64(0)).is_ok());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = MultiplexerSpec::paper(16, 2, Seed::from_u64(9)).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains(&Seed::from_u64(9).to_hex()));
        let back: MultiplexerSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let x = p("1011001110001101");
        assert_eq!(back.gamma(&x), spec.gamma(&x));
        let fx = two_level();
        let back: MultiplexerSpec = serde_json::from_str(&serde_json::to_string(&fx).unwrap()).unwrap();
        assert_eq!(back, fx);
    }

    #[test]
    fn node_address_text() {
        assert_eq!(node(&[1, 22, 3]).to_string(), "(1,22,3)");
        assert_eq!(NodeAddress::root().to_string(), "()");
        assert_eq!("(1,22,3)".parse::<NodeAddress>().unwrap(), node(&[1, 22, 3]));
        assert_eq!("()".parse::<NodeAddress>().unwrap(), NodeAddress::root());
    }

    /// Exhaustive check of the upward stability on a small keyed tree.
    #[test]
    fn upward_stability_exhaustive_n9() {
        for seed in 0..4 {
            let spec = MultiplexerSpec::paper(9, 1, Seed::from_u64(seed)).unwrap();
            check_stability_exhaustive(&spec);
        }
    }

    #[test]
    fn cached_scans_match_lazy_scans() {
        let mut rng = Seed::from_u64(21).rng();
        for n in [16u32, 64, 100] {
            let spec = MultiplexerSpec::paper(n, 1, Seed::from_u64(n as u64)).unwrap();
            for _ in 0..40 {
                let x = sample_layer(n, n / 2, &mut rng);
                let first = spec.activation_path(&x);
                let again = spec.activation_path(&x);
                assert_eq!(first, again);
                for u in &first.path[..first.path.len().min(spec.levels())] {
                    let all = spec.scan_children_exhaustive(u, &x);
                    let expect = match all.as_slice() {
                        [] => Scan::None,
                        [a] => Scan::Unique(*a),
                        [a1, a2, ..] => Scan::Multi(*a1, *a2),
                    };
                    assert_eq!(spec.scan_children(u, &x), expect);
                }
            }
        }
    }

    fn check_stability_exhaustive(spec: &MultiplexerSpec) {
        let n = spec.n();
        for idx in 0..(1u64 << n) {
            let x = Point::from_index(n, idx);
            let g = spec.gamma(&x);
            for i in 1..=n {
                if x.get(i) {
                    continue;
                }
                let gy = spec.gamma(&x.flip_coords(&[i]));
                match &g {
                    Gamma::Leaf(_) => assert!(gy == g || gy == Gamma::Star1, "x={x} i={i}"),
                    Gamma::Star1 => assert_eq!(gy, Gamma::Star1, "x={x} i={i}"),
                    Gamma::Star0 => {}
                }
            }
        }
    }

    #[test]
    fn upward_stability_exhaustive_small_arity_four_levels() {
        let spec = MultiplexerSpec::new(9, vec![3, 4, 3, 4], 2, Seed::from_u64(77)).unwrap();
        check_stability_exhaustive(&spec);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn upward_stability_sampled(seed in any::<u64>(), ell in 1usize..=2, pick in any::<u64>()) {
            let spec = MultiplexerSpec::paper(16, ell, Seed::from_u64(seed)).unwrap();
            let mut rng = Seed::from_u64(pick).rng();
            for _ in 0..50 {
                let w = rng.random_range(4..=12);
                let x = sample_layer(16, w, &mut rng);
                let zeros = x.zeros_coords();
                if zeros.is_empty() { continue; }
                let i = zeros[rng.random_range(0..zeros.len())];
                let g = spec.gamma(&x);
                let gy = spec.gamma(&x.flip_coords(&[i]));
                match &g {
                    Gamma::Leaf(_) => prop_assert!(gy == g || gy == Gamma::Star1),
                    Gamma::Star1 => prop_assert_eq!(gy, Gamma::Star1),
                    Gamma::Star0 => {}
                }
            }
        }

        #[test]
        fn multi_scan_reports_two_smallest(seed in any::<u64>(), pick in any::<u64>()) {
            let spec = MultiplexerSpec::new(16, vec![64, 64], 2, Seed::from_u64(seed)).unwrap();
            let mut rng = Seed::from_u64(pick).rng();
            let x = sample_uniform(16, &mut rng);
            let all = spec.scan_children_exhaustive(&NodeAddress::root(), &x);
            let expected = match all.len() {
                0 => Scan::None,
                1 => Scan::Unique(all[0]),
                _ => Scan::Multi(all[0], all[1]),
            };
            prop_assert_eq!(spec.scan_children(&NodeAddress::root(), &x), expected);
            if let Scan::Multi(a1, a2) = spec.scan_children(&NodeAddress::root(), &x) {
                prop_assert!(a1 < a2);
            }
        }

        #[test]
        fn activation_path_is_a_root_chain(seed in any::<u64>(), pick in any::<u64>()) {
            let spec = MultiplexerSpec::new(16, vec![8, 8, 8, 8], 2, Seed::from_u64(seed)).unwrap();
            let x = sample_uniform(16, &mut Seed::from_u64(pick).rng());
            let r = spec.activation_path(&x);
            prop_assert!(r.path[0].is_root());
            for w in r.path.windows(2) {
                prop_assert_eq!(w[1].parent().unwrap(), w[0].clone());
            }
            if r.terminal == Terminal::Leaf {
                prop_assert_eq!(r.depth(), 4);
            }
        }
    }
}
