//! Simulation engine for multilevel Talagrand functions and monotonicity testers.

pub mod attacks;
pub mod distance;
pub mod harness;
pub mod error;
pub mod hypercube;
pub mod multiplexer;
pub mod outcome;
pub mod prf;
pub mod relerror;
pub mod stats;
pub mod talagrand;

pub use error::{Error, Result};
pub use hypercube::{IndexSet, LiteralList, Point};
pub use multiplexer::{ActivationResult, EdgeAddress, Gamma, MultiplexerSpec, NodeAddress, Scan, Terminal};
pub use prf::Seed;
pub use talagrand::{BooleanFunction, FunctionInstance, LeafFunction, Regime, StrongCase, StrongResponse, Variant};
pub use outcome::{GoodParams, LogBase, Outcome, OutcomeLog};
