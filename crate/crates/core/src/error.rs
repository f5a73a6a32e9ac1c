use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown token {0:?} (vocabulary does not match the build)")]
    UnknownToken(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("events span multiple patients ({first} and {other})")]
    MixedPatients { first: String, other: String },

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("sequence of length {len} exceeds context length {context}")]
    SequenceTooLong { len: usize, context: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in tensor {tensor} at step {step}")]
    NonFiniteGradient { tensor: String, step: usize },

    #[error("example of {len} tokens exceeds batch budget of {budget} tokens")]
    ExampleExceedsBudget { len: usize, budget: usize },

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("compute budget {budget} is below the cost of one token ({per_token} FLOPs)")]
    BudgetTooSmall { budget: u128, per_token: u128 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("single-class input: {0}")]
    SingleClass(&'static str),

    #[error("anchor token absent for patient {0}")]
    AnchorAbsent(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
