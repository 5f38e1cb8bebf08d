use thiserror::Error;

/// Errors raised by the geometry engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinslerError {
    #[error("requested derivative order exceeds jet truncation: {0}")]
    OrderExceeded(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("metric tensor is singular or not positive definite at {0}")]
    SingularMetric(String),
    #[error("finite-difference step underflow (step = {0:e})")]
    StepUnderflow(f64),
    #[error("site too close to the chart boundary for the stencil")]
    StencilOutsideChart,
    #[error("trajectory left the chart at t = {0}")]
    ChartExit(f64),
    #[error("integrator step size underflow at t = {0}")]
    IntegratorUnderflow(f64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, FinslerError>;
