use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure has non-positive support (required for change-of-numeraire operations)")]
    NonPositiveSupport,
    #[error("path contains non-positive values")]
    NonPositivePath,
    #[error("marginals are not in convex order")]
    NotInConvexOrder,
    #[error("coupling violates the martingale constraint (max residual {0:.3e})")]
    MartingaleViolation(f64),
    #[error("marginal pair is reducible or degenerate: {0}")]
    ReduciblePair(String),
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("rejection bound violated: observed terminal value {observed} exceeds bound {bound}")]
    RejectionBoundViolated { observed: f64, bound: f64 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached ({0})")]
    IterationLimit(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
