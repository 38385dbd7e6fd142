use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("closed loop not Schur stable (spectral radius {0:.6})")]
    Unstable(f64),

    #[error("terminal synthesis failed: {0}")]
    Synthesis(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Both the measured and the backup problem were rejected at `step`.
    #[error("no feasible initial condition at step {step}: {reason}")]
    Infeasible { step: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
