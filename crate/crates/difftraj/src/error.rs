use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no path between start and goal")]
    NoPath,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("MPC solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverNotConverged {
        /// Best control sequence found, flattened `[delta_1, a_1, ...]`.
        best: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("rollout exceeded step cap of {cap} steps")]
    StepCapExceeded { cap: usize },

    #[error("training diverged: non-finite loss at step {step}")]
    TrainingDiverged { step: usize },

    #[error("file format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config validation error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
