//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Comparison-function class tags incompatible with the requested operation.
    #[error("class error: {0}")]
    Class(String),

    /// Input data violates a structural requirement (e.g. grid monotonicity).
    #[error("data error: {0}")]
    Data(String),

    /// Query outside the extent covered by sampled data.
    #[error("extent error: {0}")]
    Extent(String),

    /// Dimension mismatch between vectors, sets or systems.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid run configuration (budgets, grids, names).
    #[error("config error: {0}")]
    Config(String),

    /// A stated precondition of an operation does not hold.
    #[error("precondition error: {0}")]
    Precondition(String),

    /// Trajectory left the overflow guard; carries the time of the blow-up.
    #[error("flow diverged at t = {t}: state norm {norm:.3e} exceeds guard")]
    Divergence { t: f64, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
