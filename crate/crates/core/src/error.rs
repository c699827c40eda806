use thiserror::Error;

use crate::linalg::LinalgError;

/// Errors produced by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A model or experiment description is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that cannot carry a meaningful statistic (e.g. a constant column).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Autoregressive fitting failed.
    #[error("AR fit failed: {message} (condition estimate {condition:e})")]
    Fit { message: String, condition: f64 },

    /// An autoregression whose companion matrix has spectral radius >= 1.
    #[error("unstable autoregression: companion spectral radius {0}")]
    Unstable(f64),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
