use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("reference signal has zero power")]
    ZeroReference,

    #[error("signal has zero power")]
    ZeroPower,

    #[error("input too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("duration mismatch: {0}")]
    DurationMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Process exit code for the CLI: 0 ok, 2 config error, 3 data error,
    /// 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Wav(_)
            | Error::Checkpoint(_)
            | Error::DurationMismatch(_) => 3,
            Error::Numeric(_)
            | Error::LengthMismatch(..)
            | Error::ZeroReference
            | Error::ZeroPower
            | Error::TooShort { .. }
            | Error::ShapeMismatch { .. } => 4,
        }
    }
}
