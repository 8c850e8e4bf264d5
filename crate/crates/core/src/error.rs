//! Error type shared by all modules of the crate.

/// Errors produced by validation and estimation routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Generic invalid-input condition with a description of the offending field.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector arguments of mismatched length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A covariance matrix failed the positive-semidefiniteness check.
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} below tolerance {tolerance:.6e}")]
    NotPositiveSemidefinite { eigenvalue: f64, tolerance: f64 },

    /// Request exceeded the configured small-dimension cap for O(d^3) tables.
    #[error("dimension {dim} exceeds the explicit-coefficient cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// Monte Carlo routine refused to run with too few replications.
    #[error("{what} requires at least {min} replications, got {got}")]
    InsufficientReplications {
        what: &'static str,
        min: usize,
        got: usize,
    },

    /// Nested Monte Carlo budget below the documented minimum.
    #[error("Monte Carlo budget {got} below the minimum {min} required to estimate {what}")]
    InsufficientBudget {
        what: &'static str,
        min: usize,
        got: usize,
    },

    /// A bound-evaluation precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
