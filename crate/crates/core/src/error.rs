use thiserror::Error;

/// Errors surfaced by operator assembly, solvers and certifiers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("block iteration diverged: contraction estimate {kappa:.3e} exceeds 1/2")]
    Diverged { kappa: f64 },

    #[error("paving infeasible: {0}")]
    Infeasible(String),

    #[error("point {0:?} has no verified covering block")]
    UncoveredPoint(Vec<i64>),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("no good annulus found over the configured scale range")]
    NoGoodAnnulus,

    #[error("operator is not dualizable: {0}")]
    NotDualizable(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}
