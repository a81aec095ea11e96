use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation deficit {deficit:.3e} exceeds threshold {threshold:.3e} at dimension {dim}")]
    Truncation {
        deficit: f64,
        threshold: f64,
        dim: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("perturbative validity violated: {0}")]
    Perturbation(String),

    #[error("joint dimension {requested} exceeds the configured cap {cap}")]
    DimensionCap { requested: usize, cap: usize },

    #[error("state norm {norm} outside tolerance")]
    Norm { norm: f64 },

    #[error("outcome grid captures only {mass:.12} of the probability mass")]
    GridCoverage { mass: f64 },

    #[error("Fisher information is zero; the parameter is not identifiable")]
    ZeroInformation,

    #[error("estimator did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("likelihood maximum at bracket boundary {boundary} of [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64, boundary: f64 },

    #[error("capability limit: {0}")]
    Capability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
