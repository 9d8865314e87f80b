use thiserror::Error;

/// Errors surfaced by grid construction, linear algebra, and the audits.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular tridiagonal matrix at pivot index {index}")]
    SingularMatrix { index: usize },

    #[error(
        "inverse iteration did not converge after {iterations} iterations (last gap {gap:.3e})"
    )]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("sigma_min evaluation failed at lambda = {lambda}: {source}")]
    ScanFailure {
        lambda: f64,
        #[source]
        source: Box<CoreError>,
    },

    #[error("time stepper failed at step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<CoreError>,
    },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("local boundary solve did not decay (fitted slope {slope:.3e} >= 0)")]
    NonDecay { slope: f64 },

    #[error("forcing support is numerically empty: {0}")]
    EmptyForcing(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
