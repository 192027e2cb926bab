use thiserror::Error;

/// Errors raised by the library surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate abscissa")]
    DegenerateAbscissa,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("non-finite value at step {step}")]
    NonFinite { step: u64 },

    #[error("fit window too short: {points} logged points, need at least {needed}")]
    WindowTooShort { points: usize, needed: usize },

    #[error("no grok, V_post undefined")]
    NoGrok,

    #[error("no misclassified examples")]
    NoMisclassified,

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
