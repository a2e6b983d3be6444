use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical input that violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Least-squares regressors are (numerically) collinear.
    #[error("rank-deficient regressor: {0}")]
    RankDeficient(String),

    /// Iterative fitter blew up; the step size is too large.
    #[error("step size {step} diverged: mse {mse:.3e} exceeds 10x initial {initial:.3e}")]
    Divergence { step: f64, mse: f64, initial: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
