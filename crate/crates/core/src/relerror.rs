//! Two-layer (sandwiched) instances for the relative-error model: parameter
//! choices, instance builders, relative-distance reports, the query budget and
//! the subcube embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{unate_bound, CountEstimate, UnateEstimate};
use crate::error::{Error, Result};
use crate::hypercube::{sample_subset, Point};
use crate::multiplexer::MultiplexerSpec;
use crate::prf::Seed;
use crate::talagrand::{BooleanFunction, FunctionInstance, Regime, Variant};

/// Largest literal size the desk defaults pick; `4^6 = 4096` clause siblings.
pub const DESK_MAX_LITERAL_SIZE: u32 = 6;

/// Arities and literal size of a sandwiched multiplexer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichParams {
    pub n: u32,
    pub ell: usize,
    /// Children of nodes at even depth (term edges below them).
    pub term_arity: u64,
    /// Children of nodes at odd depth (clause edges below them).
    pub clause_arity: u64,
    pub literal_size: u32,
}

/// How far the arities in use are from the unscaled construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArityDisclosure {
    pub overridden: bool,
    pub term_arity: u64,
    pub clause_arity: u64,
    pub literal_size: u32,
    /// `(4/3)^n` and `4^n`, as floats since they overflow quickly.
    pub paper_term_arity: f64,
    pub paper_clause_arity: f64,
    pub paper_literal_size: u32,
}

fn check_n(n: u32) -> Result<()> {
    if n < 4 || !n.is_multiple_of(4) {
        return Err(Error::InvalidSpec(format!("sandwich regime needs 4 | n, got {n}")));
    }
    Ok(())
}

impl SandwichParams {
    /// Unscaled parameters: literal size `n`, arities `round((4/3)^n)` and `4^n`.
    pub fn paper(n: u32, ell: usize) -> Result<Self> {
        check_n(n)?;
        if n >= 32 {
            return Err(Error::InvalidSpec(format!("arity 4^{n} does not fit in 64 bits")));
        }
        Ok(SandwichParams {
            n,
            ell,
            term_arity: ((4.0f64 / 3.0).powi(n as i32).round() as u64).max(2),
            clause_arity: 1u64 << (2 * n),
            literal_size: n,
        })
    }

    /// Desk defaults: literal size `s = min(n/4, 6)` and arities sized so that
    /// one child is activated in expectation at the lowest sandwich layer.
    pub fn desk(n: u32, ell: usize) -> Result<Self> {
        check_n(n)?;
        let s = (n / 4).clamp(1, DESK_MAX_LITERAL_SIZE);
        Self::for_literal_size(n, ell, s)
    }

    /// Arities `round((4/3)^s)` and `4^s` for literal size `s`.
    pub fn for_literal_size(n: u32, ell: usize, s: u32) -> Result<Self> {
        check_n(n)?;
        if s == 0 || s >= 32 {
            return Err(Error::InvalidSpec(format!("literal size {s} outside [1, 31]")));
        }
        Ok(SandwichParams {
            n,
            ell,
            term_arity: ((4.0f64 / 3.0).powi(s as i32).round() as u64).max(2),
            clause_arity: 1u64 << (2 * s),
            literal_size: s,
        })
    }

    /// Explicit arities and literal size.
    pub fn with_arities(n: u32, ell: usize, term_arity: u64, clause_arity: u64, s: u32) -> Result<Self> {
        check_n(n)?;
        if term_arity < 2 || clause_arity < 2 {
            return Err(Error::InvalidSpec(format!("arities ({term_arity}, {clause_arity}) must be >= 2")));
        }
        if s == 0 {
            return Err(Error::InvalidSpec("literal size must be >= 1".into()));
        }
        Ok(SandwichParams { n, ell, term_arity, clause_arity, literal_size: s })
    }

    pub fn arities(&self) -> Vec<u64> {
        (0..2 * self.ell).map(|d| if d % 2 == 0 { self.term_arity } else { self.clause_arity }).collect()
    }

    pub fn spec(&self, seed: Seed) -> Result<MultiplexerSpec> {
        if self.ell == 0 {
            return Err(Error::InvalidSpec("ell must be >= 1".into()));
        }
        MultiplexerSpec::new(self.n, self.arities(), self.literal_size, seed)
    }

    pub fn disclosure(&self) -> ArityDisclosure {
        disclosure_for(self.n, self.term_arity, self.clause_arity, self.literal_size)
    }
}

/// Disclosure for an arbitrary sandwich spec (arities taken from its first two levels).
pub fn spec_disclosure(spec: &MultiplexerSpec) -> ArityDisclosure {
    let a = spec.arities();
    disclosure_for(spec.n(), a[0], a.get(1).copied().unwrap_or(a[0]), spec.literal_size())
}

fn disclosure_for(n: u32, term_arity: u64, clause_arity: u64, s: u32) -> ArityDisclosure {
    let paper_term_arity = (4.0f64 / 3.0).powi(n as i32).round();
    let paper_clause_arity = 4.0f64.powi(n as i32);
    ArityDisclosure {
        overridden: s != n || term_arity as f64 != paper_term_arity || clause_arity as f64 != paper_clause_arity,
        term_arity,
        clause_arity,
        literal_size: s,
        paper_term_arity,
        paper_clause_arity,
        paper_literal_size: n,
    }
}

/// Which relative-error family to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelFamily {
    Yes,
    /// Secret drawn from the leaf seed.
    No,
    /// Fixed secret.
    NoWithSecret(u32),
}

/// Builds a two-layer instance: value 0 below `3n/4`, 1 above `3n/4 + 1`, and
/// the sandwiched multiplexer in between.
pub fn build_sandwich_instance(
    params: &SandwichParams,
    family: RelFamily,
    spec_seed: Seed,
    leaf_seed: Seed,
) -> Result<FunctionInstance> {
    let spec = params.spec(spec_seed)?;
    match family {
        RelFamily::Yes => FunctionInstance::new(spec, Variant::RelYes, leaf_seed),
        RelFamily::No => FunctionInstance::sample_rel_no(spec, leaf_seed),
        RelFamily::NoWithSecret(secret) => FunctionInstance::new(spec, Variant::RelNo { secret }, leaf_seed),
    }
}

/// Relative-distance lower bounds of a two-layer instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelDistanceReport {
    pub n: u32,
    pub variant: Variant,
    /// Edge counts along the secret, when the instance has one.
    pub secret_direction: Option<UnateEstimate>,
    /// Edge counts along directions drawn uniformly (without knowledge of the secret).
    pub sampled_directions: Vec<UnateEstimate>,
    /// Best unate lower bound over all directions examined.
    pub unate_lower_bound: f64,
    /// Best disjoint-pairs bound over all directions: anti-monotone edges along one
    /// direction are vertex-disjoint.
    pub monotone_lower_bound: f64,
    pub ones: CountEstimate,
    pub arity: ArityDisclosure,
}

/// Unate and monotone relative-distance bounds along the secret and along
/// `directions` sampled coordinates, with `trials` samples per sampled stratum.
pub fn rel_distance_report<R: Rng + ?Sized>(
    f: &FunctionInstance,
    directions: usize,
    trials: u64,
    rng: &mut R,
) -> Result<RelDistanceReport> {
    if f.regime() != Regime::Sandwich {
        return Err(Error::VariantMismatch("relative distance needs a two-layer instance".into()));
    }
    let n = f.n();
    let secret_direction = match f.variant() {
        Variant::RelNo { secret } => Some(unate_bound(f, secret, trials, rng)?),
        _ => None,
    };
    let all: Vec<u32> = (1..=n).collect();
    let coords = sample_subset(&all, directions.min(n as usize), rng);
    let sampled_directions =
        coords.into_iter().map(|i| unate_bound(f, i, trials, rng)).collect::<Result<Vec<_>>>()?;
    let every = || secret_direction.iter().chain(&sampled_directions);
    let unate_lower_bound = every().map(|u| u.bound.value).fold(0.0, f64::max);
    let ones = f.samp_table().map(|t| CountEstimate { value: t.total, ci: t.total_ci, exact: t.total_ci.0 == t.total_ci.1 });
    let ones = ones.expect("sandwich instances carry a SAMP table");
    let monotone_lower_bound =
        every().map(|u| u.anti_monotone_edges.value / ones.value).fold(0.0, f64::max).max(unate_lower_bound);
    Ok(RelDistanceReport {
        n,
        variant: f.variant(),
        secret_direction,
        sampled_directions,
        unate_lower_bound,
        monotone_lower_bound,
        ones,
        arity: spec_disclosure(f.spec()),
    })
}

/// Query budget for the relative-error game: `n^{1-1/(2ℓ+1)} / log2 n`, rounded
/// half up, at least 1.
pub fn rel_query_budget(n: u32, ell: usize) -> u64 {
    if n < 2 {
        return 1;
    }
    let n = n as f64;
    let q = n.powf(1.0 - 1.0 / (2 * ell + 1) as f64) / n.log2();
    (q.round() as u64).max(1)
}

/// `x ↦ x_{k+1} ∧ … ∧ x_n ∧ inner(x_1, …, x_k)`, lifting a core on `k` variables to `n`.
pub struct Embedding<F> {
    pub inner: F,
    pub n: u32,
}

impl<F: BooleanFunction> Embedding<F> {
    pub fn new(inner: F, n: u32) -> Result<Self> {
        if inner.n() > n {
            return Err(Error::DimensionMismatch { expected: n, actual: inner.n() });
        }
        Ok(Embedding { inner, n })
    }

    /// The first `k` coordinates of `x`.
    pub fn restrict(&self, x: &Point) -> Point {
        let k = self.inner.n();
        Point::from_bits(&(1..=k).map(|i| x.get(i)).collect::<Vec<_>>())
    }
}

impl<F: BooleanFunction> BooleanFunction for Embedding<F> {
    fn n(&self) -> u32 {
        self.n
    }

    fn eval(&self, x: &Point) -> bool {
        let k = self.inner.n();
        (k + 1..=self.n).all(|i| x.get(i)) && self.inner.eval(&self.restrict(x))
    }
}
