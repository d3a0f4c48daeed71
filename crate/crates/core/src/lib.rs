//! Desk-scale laboratory for one-dimensional nonlocal variational problems.
//!
//! The crate evaluates fractional `(s,p)` energies of piecewise-constant
//! fields with exterior data exactly (closed-form singular-kernel weights),
//! minimizes them for `p > 1` (smooth) and `p = 1` (nonsmooth, with a dual
//! certificate), and packages the limit programs `p -> 1` and `s -> 1` as
//! runnable sweeps with independent oracles behind every number.

pub mod acceptance;
pub mod asymptotics;
pub mod certificate;
pub mod domain;
pub mod energy;
pub mod harness;
pub mod instances;
pub mod kernel;
pub mod oracle;
pub mod perimeter;
pub mod solver_one;
pub mod solver_smooth;

pub use domain::{CellSet, ExteriorData, FarField, FarRegion, Field, Mesh};
pub use energy::{EnergyBreakdown, TailReport};
pub use kernel::{Cell, WeightTable};
pub use solver_one::Certificate;

/// Crate-wide error type; variants mirror the failure modes of the public
/// operations.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("singular pair: cells overlap or coincide")]
    SingularPair,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mesh spec violation: {0}")]
    Spec(String),
    #[error("alpha mismatch: table alpha {table} vs requested s*p {requested}")]
    AlphaMismatch { table: f64, requested: f64 },
    #[error("exterior data mismatch between fields")]
    ExteriorMismatch,
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("config error: field {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
