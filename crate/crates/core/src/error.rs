use thiserror::Error;

#[derive(Debug, Error)]
pub enum HerdingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("PCT violation at step {step}: w.v = {dot:e} exceeds tolerance {tol:e}")]
    PctViolation { step: usize, dot: f64, tol: f64 },

    #[error("non-finite weight at step {step}, component {index}")]
    NonFiniteWeight { step: usize, index: usize },

    #[error("state space is not enumerable: {0}")]
    NotEnumerable(String),

    #[error("moments lie outside the convex hull of the feature vectors (separation {separation:e})")]
    MomentsOutsideHull { separation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("local maximizer increased the energy from {before} to {after}")]
    EnergyIncreased { before: f64, after: f64 },

    #[error("lattice basis is singular")]
    SingularBasis,

    #[error("log-sum-exp overflow")]
    Overflow,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HerdingError>;
