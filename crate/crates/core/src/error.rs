use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("unknown model preset `{name}`; available: {available}")]
    UnknownModel { name: String, available: String },

    #[error("unknown hardware preset `{name}`; available: {available}")]
    UnknownHardware { name: String, available: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid code configuration: {0}")]
    InvalidCode(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("capacity exceeded at layer {layer} ({what}): need {needed} bytes, {available} available")]
    CapacityExceeded {
        layer: usize,
        what: String,
        needed: u64,
        available: u64,
    },

    #[error("uncorrectable segment {segment} in dot product")]
    UncorrectableSegment { segment: usize },

    #[error("uncorrectable read at token {token}, layer {layer}: {count} segment(s)")]
    UncorrectableAbort { token: usize, layer: usize, count: u64 },

    #[error("scoreboard entry {segment} has no corrected data")]
    MissingCorrection { segment: usize },

    #[error("unknown baseline kind `{0}`")]
    UnknownBaseline(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
