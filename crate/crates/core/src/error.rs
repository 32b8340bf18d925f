use thiserror::Error;

pub type Result<T, E = DflError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DflError {
    /// A model was evaluated at a transceiver position, where the path geometry is undefined.
    #[error("position ({x}, {y}) coincides with a link endpoint")]
    DegeneratePosition { x: f64, y: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("particle weights sum to zero")]
    DegenerateWeights,

    #[error("line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DflError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        DflError::InvalidConfig(msg.into())
    }

    pub(crate) fn format(line: u64, msg: impl Into<String>) -> Self {
        DflError::Format {
            line,
            message: msg.into(),
        }
    }
}
