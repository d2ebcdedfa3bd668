use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric overflow in {term}")]
    NumericOverflow { term: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergence at step {step} (step size too large?)")]
    Divergence { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rate fit domain error: {0}")]
    FitDomain(String),

    #[error("geometry lost: defect {defect:.3e} exceeds {limit:.1e}")]
    GeometryLoss { defect: f64, limit: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("constraint solve failed after {iterations} iterations (residual {residual:.3e})")]
    ConstraintSolve { iterations: usize, residual: f64 },

    #[error("diffusion spec violated: {0}")]
    Spec(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
