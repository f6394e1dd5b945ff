//! Multilevel Talagrand functions: the yes/no families, the per-leaf-secret
//! variant, the sandwiched two-layer variants, and their oracles.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{is_perfect_square, middle_bounds, sample_layer, sandwich_bounds, Point};
use crate::multiplexer::{ActivationResult, Gamma, MultiplexerSpec, NodeAddress, Terminal};
use crate::prf::{Prf, Seed};
use crate::stats::{binomial, wilson};

/// Anything that answers membership queries on `{0,1}^n`.
pub trait BooleanFunction: Sync {
    fn n(&self) -> u32;
    fn eval(&self, x: &Point) -> bool;
}

/// Wraps a closure as a [`BooleanFunction`].
pub struct FnFunction<F> {
    pub n: u32,
    pub f: F,
}

impl<F: Fn(&Point) -> bool + Sync> BooleanFunction for FnFunction<F> {
    fn n(&self) -> u32 {
        self.n
    }

    fn eval(&self, x: &Point) -> bool {
        (self.f)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Truncation outside `[n/2 - √n, n/2 + √n]`.
    Middle,
    /// Truncation outside `[3n/4, 3n/4 + 1]`.
    Sandwich,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Middle => "middle",
            Regime::Sandwich => "sandwich",
        }
    }

    /// Inclusive weight range where the multiplexer map decides the value.
    pub fn bounds(self, n: u32) -> (u32, u32) {
        match self {
            Regime::Middle => middle_bounds(n),
            Regime::Sandwich => sandwich_bounds(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Yes,
    No { secret: u32 },
    CwxNo,
    RelYes,
    RelNo { secret: u32 },
}

impl Variant {
    pub fn regime(self) -> Regime {
        match self {
            Variant::Yes | Variant::No { .. } | Variant::CwxNo => Regime::Middle,
            Variant::RelYes | Variant::RelNo { .. } => Regime::Sandwich,
        }
    }

    pub fn is_yes(self) -> bool {
        matches!(self, Variant::Yes | Variant::RelYes)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Yes => "yes",
            Variant::No { .. } => "no",
            Variant::CwxNo => "cwx-no",
            Variant::RelYes => "rel-yes",
            Variant::RelNo { .. } => "rel-no",
        }
    }
}

/// The function `h_u` attached to a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafFunction {
    Const(bool),
    Dictator(u32),
    AntiDictator(u32),
}

impl LeafFunction {
    pub fn eval(self, x: &Point) -> bool {
        match self {
            LeafFunction::Const(b) => b,
            LeafFunction::Dictator(i) => x.get(i),
            LeafFunction::AntiDictator(i) => !x.get(i),
        }
    }
}

/// What the stronger oracle reveals besides the path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongCase {
    Leaf { bit: bool },
    None,
    Multi { a1: u64, a2: u64, bits: Option<(bool, bool)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrongResponse {
    pub path: ActivationResult,
    pub case: StrongCase,
    pub implied_value: bool,
}

impl StrongResponse {
    pub fn depth(&self) -> usize {
        self.path.depth()
    }
}

const LEAF_CONTEXT: &str = "mtf leaf functions v1";
const SAMP_EXACT_LIMIT: f64 = 200_000.0;
const SAMP_ESTIMATE_DRAWS: usize = 20_000;

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    spec: MultiplexerSpec,
    variant: Variant,
    leaf_seed: Seed,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    leaf_overrides: BTreeMap<NodeAddress, LeafFunction>,
}

/// A concrete `f_{M,H}`. Immutable after construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "InstanceRecord", into = "InstanceRecord")]
pub struct FunctionInstance {
    spec: MultiplexerSpec,
    variant: Variant,
    leaf_seed: Seed,
    leaf_overrides: BTreeMap<NodeAddress, LeafFunction>,
    leaf_prf: PrfHolder,
    samp: Option<SampTable>,
}

#[derive(Clone, Copy)]
struct PrfHolder(Prf);

impl std::fmt::Debug for PrfHolder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Prf(..)")
    }
}

impl From<FunctionInstance> for InstanceRecord {
    fn from(f: FunctionInstance) -> Self {
        InstanceRecord { spec: f.spec, variant: f.variant, leaf_seed: f.leaf_seed, leaf_overrides: f.leaf_overrides }
    }
}

impl TryFrom<InstanceRecord> for FunctionInstance {
    type Error = Error;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        FunctionInstance::build(r.spec, r.variant, r.leaf_seed, r.leaf_overrides)
    }
}

impl PartialEq for FunctionInstance {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.variant == other.variant
            && self.leaf_seed == other.leaf_seed
            && self.leaf_overrides == other.leaf_overrides
    }
}

impl FunctionInstance {
    pub fn new(spec: MultiplexerSpec, variant: Variant, leaf_seed: Seed) -> Result<Self> {
        Self::build(spec, variant, leaf_seed, BTreeMap::new())
    }

    /// Instance with explicit leaf functions at the listed leaves (hand fixtures).
    pub fn with_leaves(
        spec: MultiplexerSpec,
        variant: Variant,
        leaf_seed: Seed,
        leaves: BTreeMap<NodeAddress, LeafFunction>,
    ) -> Result<Self> {
        Self::build(spec, variant, leaf_seed, leaves)
    }

    /// Secret variable drawn from the leaf seed, as used by the no-families.
    pub fn derive_secret(n: u32, leaf_seed: &Seed) -> u32 {
        let prf = Prf::new(leaf_seed, LEAF_CONTEXT);
        (prf.eval(b"secret", &[]) % n as u64) as u32 + 1
    }

    /// Middle-regime no-instance with its secret derived from `leaf_seed`.
    pub fn sample_no(spec: MultiplexerSpec, leaf_seed: Seed) -> Result<Self> {
        let secret = Self::derive_secret(spec.n(), &leaf_seed);
        Self::new(spec, Variant::No { secret }, leaf_seed)
    }

    /// Sandwich-regime no-instance with its secret derived from `leaf_seed`.
    pub fn sample_rel_no(spec: MultiplexerSpec, leaf_seed: Seed) -> Result<Self> {
        let secret = Self::derive_secret(spec.n(), &leaf_seed);
        Self::new(spec, Variant::RelNo { secret }, leaf_seed)
    }

    fn build(
        spec: MultiplexerSpec,
        variant: Variant,
        leaf_seed: Seed,
        leaf_overrides: BTreeMap<NodeAddress, LeafFunction>,
    ) -> Result<Self> {
        let n = spec.n();
        match variant.regime() {
            Regime::Middle if !is_perfect_square(n) => {
                return Err(Error::InvalidSpec(format!("middle regime needs a perfect square n, got {n}")))
            }
            Regime::Sandwich if !n.is_multiple_of(4) => {
                return Err(Error::InvalidSpec(format!("sandwich regime needs 4 | n, got {n}")))
            }
            _ => {}
        }
        if let Variant::No { secret } | Variant::RelNo { secret } = variant {
            if secret == 0 || secret > n {
                return Err(Error::IndexOutOfRange { index: secret, n });
            }
        }
        for (u, h) in &leaf_overrides {
            if u.depth() != spec.levels() {
                return Err(Error::InvalidSpec(format!("leaf override at non-leaf {u}")));
            }
            if let LeafFunction::Dictator(i) | LeafFunction::AntiDictator(i) = *h {
                if i == 0 || i > n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
            }
        }
        let leaf_prf = PrfHolder(Prf::new(&leaf_seed, LEAF_CONTEXT));
        let mut f = FunctionInstance { spec, variant, leaf_seed, leaf_overrides, leaf_prf, samp: None };
        if variant.regime() == Regime::Sandwich {
            let seed = f.leaf_seed.derive("samp-layer-density", 0);
            f.samp = Some(SampTable::build(&f, f.layer_bounds(), &seed));
        }
        Ok(f)
    }

    pub fn spec(&self) -> &MultiplexerSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn regime(&self) -> Regime {
        self.variant.regime()
    }

    pub fn leaf_seed(&self) -> &Seed {
        &self.leaf_seed
    }

    pub fn n(&self) -> u32 {
        self.spec.n()
    }

    pub fn levels(&self) -> usize {
        self.spec.levels()
    }

    /// Inclusive weight range handled by the multiplexer map.
    pub fn layer_bounds(&self) -> (u32, u32) {
        self.regime().bounds(self.n())
    }

    pub fn in_layers(&self, x: &Point) -> bool {
        let (lo, hi) = self.layer_bounds();
        (lo..=hi).contains(&x.weight())
    }

    /// The secret variable of a global-secret no-instance. Test-only accessor:
    /// testers and attacks never call it.
    pub fn secret_of(&self) -> Option<u32> {
        match self.variant {
            Variant::No { secret } | Variant::RelNo { secret } => Some(secret),
            _ => None,
        }
    }

    /// Per-leaf secret of a per-leaf-secret instance. Test-only accessor.
    pub fn leaf_secret_of(&self, u: &NodeAddress) -> Option<u32> {
        match (self.variant, self.leaf_function(u)) {
            (Variant::CwxNo, LeafFunction::AntiDictator(i) | LeafFunction::Dictator(i)) => Some(i),
            _ => None,
        }
    }

    /// `h_u` for a leaf `u`.
    pub fn leaf_function(&self, u: &NodeAddress) -> LeafFunction {
        debug_assert_eq!(u.depth(), self.levels());
        if let Some(h) = self.leaf_overrides.get(u) {
            return *h;
        }
        let prf = &self.leaf_prf.0;
        let coin = || prf.eval(b"leaf", &u.0) & 1 == 1;
        match self.variant {
            Variant::Yes | Variant::RelYes => LeafFunction::Const(coin()),
            Variant::No { secret } | Variant::RelNo { secret } => {
                if coin() {
                    LeafFunction::Dictator(secret)
                } else {
                    LeafFunction::AntiDictator(secret)
                }
            }
            Variant::CwxNo => {
                let s = (prf.eval(b"cwx-secret", &u.0) % self.n() as u64) as u32 + 1;
                LeafFunction::AntiDictator(s)
            }
        }
    }

    /// Truncation value, or `None` when `x` lies in the layers.
    fn truncated(&self, x: &Point) -> Option<bool> {
        let (lo, hi) = self.layer_bounds();
        let w = x.weight();
        if w > hi {
            Some(true)
        } else if w < lo {
            Some(false)
        } else {
            None
        }
    }

    /// Membership oracle.
    pub fn eval(&self, x: &Point) -> bool {
        if let Some(b) = self.truncated(x) {
            return b;
        }
        match self.spec.gamma(x) {
            Gamma::Star0 => false,
            Gamma::Star1 => true,
            Gamma::Leaf(u) => self.leaf_function(&u).eval(x),
        }
    }

    /// The stronger oracle. Queries outside the layers are rejected.
    pub fn strong_query(&self, x: &Point) -> Result<StrongResponse> {
        if x.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), actual: x.n() });
        }
        if self.truncated(x).is_some() {
            return Err(Error::OutOfLayer { weight: x.weight(), regime: self.regime().name() });
        }
        let path = self.spec.activation_path(x);
        let k = path.depth();
        let case = match path.terminal {
            Terminal::Leaf => StrongCase::Leaf { bit: self.leaf_function(path.end()).eval(x) },
            Terminal::NoneActivated => StrongCase::None,
            Terminal::MultiActivated(a1, a2) => {
                let bits = (k + 1 == self.levels()).then(|| {
                    let u = path.end();
                    (self.leaf_function(&u.child(a1)).eval(x), self.leaf_function(&u.child(a2)).eval(x))
                });
                StrongCase::Multi { a1, a2, bits }
            }
        };
        let implied_value = match case {
            StrongCase::Leaf { bit } => bit,
            StrongCase::None => k % 2 == 1,
            StrongCase::Multi { .. } => k.is_multiple_of(2),
        };
        Ok(StrongResponse { path, case, implied_value })
    }

    /// Uniform sample from `f^{-1}(1)`; sandwich regime only.
    pub fn samp_query<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let table = self
            .samp
            .as_ref()
            .ok_or_else(|| Error::VariantMismatch("SAMP needs a sandwich-regime instance".into()))?;
        Ok(table.sample(self, rng))
    }

    /// Summary of the SAMP construction (sandwich regime only).
    pub fn samp_table(&self) -> Option<&SampTable> {
        self.samp.as_ref()
    }
}

impl BooleanFunction for FunctionInstance {
    fn n(&self) -> u32 {
        self.spec.n()
    }

    fn eval(&self, x: &Point) -> bool {
        FunctionInstance::eval(self, x)
    }
}

/// How the 1-points of one sandwich layer are known.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerOnes {
    /// Every 1-point of the layer, enumerated.
    Exact { points: Vec<Point> },
    /// Density of 1-points estimated from uniform draws, with a 95% Wilson interval.
    Estimated { density: f64, ci: (f64, f64), draws: usize },
}

/// One weight level of `f^{-1}(1)` and its (possibly estimated) size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampLevel {
    pub weight: u32,
    pub count: f64,
    pub layer: Option<LayerOnes>,
}

/// Frozen level weights used by SAMP.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampTable {
    pub levels: Vec<SampLevel>,
    pub total: f64,
    /// Bounds on `|f^{-1}(1)|` combining the per-layer intervals.
    pub total_ci: (f64, f64),
}

impl SampTable {
    /// Freezes the level weights of a two-layer function whose value is 0 below
    /// `lo` and 1 above `hi`.
    pub fn build<F: BooleanFunction + ?Sized>(f: &F, (lo, hi): (u32, u32), seed: &Seed) -> SampTable {
        let n = f.n();
        let mut rng = seed.rng();
        let mut levels = Vec::new();
        let (mut tot_lo, mut tot_hi) = (0.0, 0.0);
        for w in lo..=n {
            let size = binomial(n, w);
            if w > hi {
                levels.push(SampLevel { weight: w, count: size, layer: None });
                tot_lo += size;
                tot_hi += size;
                continue;
            }
            if size <= SAMP_EXACT_LIMIT {
                let points: Vec<Point> =
                    layer_points(n, w).into_iter().filter(|x| f.eval(x)).collect();
                let count = points.len() as f64;
                tot_lo += count;
                tot_hi += count;
                levels.push(SampLevel { weight: w, count, layer: Some(LayerOnes::Exact { points }) });
            } else {
                let hits = (0..SAMP_ESTIMATE_DRAWS).filter(|_| f.eval(&sample_layer(n, w, &mut rng))).count();
                let density = hits as f64 / SAMP_ESTIMATE_DRAWS as f64;
                let ci = wilson(hits as u64, SAMP_ESTIMATE_DRAWS as u64);
                tot_lo += ci.0 * size;
                tot_hi += ci.1 * size;
                levels.push(SampLevel {
                    weight: w,
                    count: density * size,
                    layer: Some(LayerOnes::Estimated { density, ci, draws: SAMP_ESTIMATE_DRAWS }),
                });
            }
        }
        let total = levels.iter().map(|l| l.count).sum();
        SampTable { levels, total, total_ci: (tot_lo, tot_hi) }
    }

    /// Uniform sample from `f^{-1}(1)`; every output satisfies `f(x) = 1`.
    pub fn sample<F: BooleanFunction + ?Sized, R: Rng + ?Sized>(&self, f: &F, rng: &mut R) -> Point {
        let n = f.n();
        let mut r = rng.random::<f64>() * self.total;
        let level = self
            .levels
            .iter()
            .find(|l| {
                if r < l.count {
                    true
                } else {
                    r -= l.count;
                    false
                }
            })
            .unwrap_or_else(|| self.levels.iter().rev().find(|l| l.count > 0.0).expect("f has 1-points"));
        match &level.layer {
            None => sample_layer(n, level.weight, rng),
            Some(LayerOnes::Exact { points }) => points[rng.random_range(0..points.len())].clone(),
            Some(LayerOnes::Estimated { .. }) => loop {
                let x = sample_layer(n, level.weight, rng);
                if f.eval(&x) {
                    break x;
                }
            },
        }
    }
}

/// All points of weight `w` in lexicographic order of their index.
pub fn layer_points(n: u32, w: u32) -> Vec<Point> {
    assert!(n <= 64);
    if w == 0 {
        return vec![Point::zeros(n)];
    }
    if w > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut v: u64 = (1u64 << w) - 1;
    let limit = if n == 64 { u64::MAX } else { 1u64 << n };
    loop {
        out.push(Point::from_index(n, v));
        // Next integer with the same popcount.
        let c = v & v.wrapping_neg();
        let r = v.wrapping_add(c);
        if r == 0 || (n < 64 && r >= limit) {
            break;
        }
        v = (((r ^ v) >> 2) / c) | r;
        if n < 64 && v >= limit {
            break;
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_level_yes;
    use super::*;
    use crate::hypercube::sample_uniform;
    use proptest::prelude::*;
    use rand::Rng;

    fn at_weight(n: u32, w: u32) -> Point {
        Point::from_ones(n, &(1..=w).collect::<Vec<_>>()).unwrap()
    }

    fn no16(seed: u64) -> FunctionInstance {
        let spec = MultiplexerSpec::paper(16, 1, Seed::from_u64(seed)).unwrap();
        FunctionInstance::sample_no(spec, Seed::from_u64(seed + 1000)).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let f = no16(1);
        assert!(f.eval(&at_weight(16, 13)));
        assert!(!f.eval(&at_weight(16, 3)));
        assert!(matches!(f.strong_query(&at_weight(16, 13)), Err(Error::OutOfLayer { .. })));
    }

    #[test]
    fn fixture_eval() {
        let f = two_level_yes();
        assert!(f.eval(&"1100".parse().unwrap()));
    }

    #[test]
    fn strong_query_cases_on_fixture() {
        let f = two_level_yes();
        let r = f.strong_query(&"1100".parse().unwrap()).unwrap();
        assert_eq!(r.case, StrongCase::Leaf { bit: true });
        assert!(r.implied_value);
        let r = f.strong_query(&"0011".parse().unwrap()).unwrap();
        // T_2 uniquely satisfied; C_{2,1} = {1} and C_{2,2} = {2} both falsified.
        assert_eq!(r.depth(), 1);
        assert_eq!(r.case, StrongCase::Multi { a1: 1, a2: 2, bits: Some((false, false)) });
        assert!(!r.implied_value);
        let r = f.strong_query(&"1010".parse().unwrap()).unwrap();
        // Nothing satisfied at the root: Case 2 at even depth.
        assert_eq!(r.case, StrongCase::None);
        assert!(!r.implied_value);
    }

    #[test]
    fn secrets() {
        let spec = MultiplexerSpec::paper(16, 1, Seed::from_u64(2)).unwrap();
        let yes = FunctionInstance::new(spec.clone(), Variant::Yes, Seed::from_u64(3)).unwrap();
        assert_eq!(yes.secret_of(), None);
        let no = FunctionInstance::new(spec.clone(), Variant::No { secret: 7 }, Seed::from_u64(3)).unwrap();
        assert_eq!(no.secret_of(), Some(7));
        let cwx = FunctionInstance::new(spec, Variant::CwxNo, Seed::from_u64(3)).unwrap();
        let secrets: Vec<u32> =
            (1..=40).map(|a| cwx.leaf_secret_of(&NodeAddress(vec![a, 1])).unwrap()).collect();
        assert!(secrets.iter().any(|&s| s != secrets[0]));
    }

    #[test]
    fn regime_validation() {
        let spec = MultiplexerSpec::new(12, vec![4, 4], 2, Seed::from_u64(0)).unwrap();
        assert!(FunctionInstance::new(spec.clone(), Variant::Yes, Seed::from_u64(0)).is_err());
        assert!(FunctionInstance::new(spec, Variant::RelYes, Seed::from_u64(0)).is_ok());
        let spec = MultiplexerSpec::paper(16, 1, Seed::from_u64(0)).unwrap();
        assert!(FunctionInstance::new(spec, Variant::No { secret: 17 }, Seed::from_u64(0)).is_err());
    }

    #[test]
    fn consistency_exhaustive_n16() {
        for seed in 0..3 {
            for ell in 1..=2 {
                let spec = MultiplexerSpec::paper(16, ell, Seed::from_u64(seed)).unwrap();
                let f = FunctionInstance::sample_no(spec, Seed::from_u64(seed)).unwrap();
                for idx in 0..(1u64 << 16) {
                    let x = Point::from_index(16, idx);
                    if f.in_layers(&x) {
                        assert_eq!(f.strong_query(&x).unwrap().implied_value, f.eval(&x));
                    }
                }
            }
        }
    }

    #[test]
    fn instance_serde_round_trip() {
        let f = no16(5);
        let json = serde_json::to_string(&f).unwrap();
        let g: FunctionInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(f, g);
        let mut rng = Seed::from_u64(1).rng();
        for _ in 0..200 {
            let x = sample_uniform(16, &mut rng);
            assert_eq!(f.eval(&x), g.eval(&x));
        }
    }

    #[test]
    fn layer_points_counts() {
        assert_eq!(layer_points(16, 12).len(), 1820);
        assert_eq!(layer_points(4, 0).len(), 1);
        assert_eq!(layer_points(5, 5).len(), 1);
        for x in layer_points(10, 4) {
            assert_eq!(x.weight(), 4);
        }
    }

    fn sandwich16(seed: u64, yes: bool) -> FunctionInstance {
        let spec = MultiplexerSpec::new(16, vec![3, 256], 4, Seed::from_u64(seed)).unwrap();
        if yes {
            FunctionInstance::new(spec, Variant::RelYes, Seed::from_u64(seed + 7)).unwrap()
        } else {
            FunctionInstance::sample_rel_no(spec, Seed::from_u64(seed + 7)).unwrap()
        }
    }

    #[test]
    fn samp_outputs_are_ones_and_match_level_mass() {
        let f = sandwich16(3, false);
        let table = f.samp_table().unwrap();
        let above: f64 = (14..=16).map(|w| binomial(16, w)).sum();
        let p = above / table.total;
        let mut rng = Seed::from_u64(4).rng();
        let draws = 10_000;
        let mut hits = 0;
        for _ in 0..draws {
            let x = f.samp_query(&mut rng).unwrap();
            assert!(f.eval(&x));
            hits += (x.weight() > 13) as u32;
        }
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p).abs() <= 3.0 * sigma, "p={p}");
    }

    #[test]
    fn samp_forced_support_above_layers() {
        let f = FnFunction { n: 16, f: |x: &Point| x.weight() > 13 };
        let table = SampTable::build(&f, (12, 13), &Seed::from_u64(1));
        let mut rng = Seed::from_u64(5).rng();
        for _ in 0..1000 {
            assert!(table.sample(&f, &mut rng).weight() > 13);
        }
        assert!(no16(1).samp_query(&mut rng).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn consistency_sampled_n64(seed in any::<u64>(), ell in 1usize..=2) {
            let spec = MultiplexerSpec::new(64, vec![256; 2 * ell], 8, Seed::from_u64(seed)).unwrap();
            let f = FunctionInstance::sample_no(spec, Seed::from_u64(seed ^ 1)).unwrap();
            let mut rng = Seed::from_u64(seed ^ 2).rng();
            for _ in 0..20 {
                let w = rng.random_range(24..=40);
                let x = sample_layer(64, w, &mut rng);
                prop_assert_eq!(f.strong_query(&x).unwrap().implied_value, f.eval(&x));
            }
        }

        #[test]
        fn multi_bits_only_below_leaves(seed in any::<u64>()) {
            let spec = MultiplexerSpec::new(16, vec![16, 16, 16, 16], 3, Seed::from_u64(seed)).unwrap();
            let f = FunctionInstance::sample_no(spec, Seed::from_u64(seed)).unwrap();
            let mut rng = Seed::from_u64(seed).rng();
            for _ in 0..50 {
                let x = sample_layer(16, rng.random_range(4..=12), &mut rng);
                let r = f.strong_query(&x).unwrap();
                if let StrongCase::Multi { bits, .. } = r.case {
                    prop_assert_eq!(bits.is_some(), r.depth() == 3);
                }
                if let StrongCase::Leaf { .. } = r.case {
                    prop_assert_eq!(r.depth(), 4);
                }
            }
        }

        #[test]
        fn determinism(seed in any::<u64>()) {
            let a = no16(seed % 1000);
            let b = no16(seed % 1000);
            let mut rng = Seed::from_u64(seed).rng();
            for _ in 0..50 {
                let x = sample_uniform(16, &mut rng);
                prop_assert_eq!(a.eval(&x), b.eval(&x));
            }
        }
    }
}
