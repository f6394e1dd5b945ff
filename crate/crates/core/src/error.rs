use thiserror::Error;

/// Errors surfaced by the core crate.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("coordinate {index} outside [1, {n}]")]
    IndexOutOfRange { index: u32, n: u32 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: u32, actual: u32 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("strong query at weight {weight} lies outside the {regime} layers")]
    OutOfLayer { weight: u32, regime: &'static str },

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("n = {n} exceeds the exact-distance limit {limit}")]
    ExactLimit { n: u32, limit: u32 },

    #[error("violation pairs are not vertex-disjoint")]
    NotDisjoint,

    #[error("pair is not a violation: {0}")]
    NotViolating(String),

    #[error("query budget exhausted ({allowed} queries)")]
    BudgetExhausted { allowed: u64 },

    #[error("round budget exhausted ({allowed} rounds)")]
    RoundsExhausted { allowed: u32 },

    #[error("round discipline violated: {0}")]
    RoundDiscipline(String),

    #[error("inconsistent oracle response: {0}")]
    InconsistentResponse(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
