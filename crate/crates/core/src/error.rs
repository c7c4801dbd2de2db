use thiserror::Error;

pub type Result<T> = std::result::Result<T, AtlasError>;

#[derive(Debug, Error)]
pub enum AtlasError {
    /// An input coordinate fell outside the unit interval.
    #[error("input {value} at coordinate {coordinate} is outside [0, 1]")]
    Domain { coordinate: usize, value: f64 },

    /// An exponential interior grew large enough to overflow.
    #[error("exponential interior {value} exceeds the numeric range limit {limit}")]
    NumericRange { value: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {actual} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection sampling gave up after {attempts} attempts (gap {gap})")]
    RejectionExhausted { attempts: usize, gap: f64 },

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AtlasError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AtlasError::InvalidArgument(msg.into())
    }
}
