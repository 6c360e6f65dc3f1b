use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch at {location}: expected {expected}, got {actual}")]
    DimensionMismatch {
        location: String,
        expected: String,
        actual: String,
    },

    #[error("invalid split index {index} for a network of {layers} layers")]
    InvalidSplit { index: usize, layers: usize },

    #[error("input too short: length {len} is smaller than kernel length {kernel_len}")]
    InputTooShort { len: usize, kernel_len: usize },

    #[error("window overrun: {window_len} samples already consumed and auto-reset is off")]
    WindowOverrun { window_len: usize },

    #[error("channel mismatch: network expects {expected} channels, sample has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("trace format error at row {row}, column {column}: {message}")]
    TraceFormat {
        row: usize,
        column: String,
        message: String,
    },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn mismatch(
        location: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            location: location.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short stable identifier, used by the CLI's machine-parsable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidSplit { .. } => "invalid_split",
            Error::InputTooShort { .. } => "input_too_short",
            Error::WindowOverrun { .. } => "window_overrun",
            Error::ChannelMismatch { .. } => "channel_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::TraceFormat { .. } => "trace_format",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}
