//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. The CLI maps
//! each variant to a stable machine-parsable code and exit status via
//! [`Error::code`] and [`Error::exit_code`].

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The input document contains no non-blank content.
    #[error("empty document: {0}")]
    EmptyDocument(String),

    /// A record failed field-level validation. `line` is 1-based.
    #[error("schema violation at line {line}: {message}")]
    SchemaViolation { line: usize, message: String },

    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A remote or mock provider call failed. Transient failures are
    /// eligible for retry.
    #[error("provider failure: {message}")]
    Provider { message: String, transient: bool },

    #[error("provider timed out after {0} ms")]
    Timeout(u64),

    /// Model output could not be parsed into the expected structure.
    #[error("parse failure: {0}")]
    Parse(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    /// A scoring operation was given no context paragraphs.
    #[error("empty context: {0}")]
    EmptyContext(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// The comparator's closing sentence did not contain a verdict.
    #[error("verdict parse failure: {0}")]
    VerdictParse(String),

    /// The judge's final sentence did not contain a score in [1,10].
    #[error("score parse failure: {0}")]
    ScoreParse(String),

    /// Some systems share no comparison path; a joint rating fit is
    /// undefined.
    #[error("comparison graph is disconnected: {0}")]
    DisconnectedGraph(String),

    /// A system won or lost every game; its maximum-likelihood rating is
    /// infinite.
    #[error("degenerate comparison data: {0}")]
    DegenerateData(String),

    #[error("wrong pipeline mode: {0}")]
    WrongMode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty set: {0}")]
    EmptySet(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn provider(message: impl Into<String>) -> Self {
        Error::Provider {
            message: message.into(),
            transient: false,
        }
    }

    pub fn provider_transient(message: impl Into<String>) -> Self {
        Error::Provider {
            message: message.into(),
            transient: true,
        }
    }

    /// Whether a retry may succeed without changing the request.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            Error::Provider {
                transient: true,
                ..
            } | Error::Timeout(_)
        )
    }

    /// Stable machine-parsable code, printed by the CLI as `error[CODE]: ...`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyDocument(_) => "E_EMPTY_DOCUMENT",
            Error::SchemaViolation { .. } => "E_SCHEMA",
            Error::Io { .. } => "E_IO",
            Error::Provider { .. } => "E_PROVIDER",
            Error::Timeout(_) => "E_TIMEOUT",
            Error::Parse(_) => "E_PARSE",
            Error::DimensionMismatch { .. } => "E_DIM",
            Error::ZeroVector => "E_ZERO_VECTOR",
            Error::EmptyContext(_) => "E_EMPTY_CONTEXT",
            Error::IndexOutOfRange { .. } => "E_INDEX",
            Error::VerdictParse(_) => "E_VERDICT",
            Error::ScoreParse(_) => "E_SCORE",
            Error::DisconnectedGraph(_) => "E_DISCONNECTED",
            Error::DegenerateData(_) => "E_DEGENERATE",
            Error::WrongMode(_) => "E_MODE",
            Error::Config(_) => "E_CONFIG",
            Error::EmptySet(_) => "E_EMPTY_SET",
        }
    }

    /// Process exit status for the CLI. Config/usage errors use 2 to match
    /// the argument parser's own convention.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::WrongMode(_) => 2,
            Error::Io { .. } => 3,
            Error::SchemaViolation { .. } | Error::EmptyDocument(_) => 4,
            Error::Parse(_) | Error::VerdictParse(_) | Error::ScoreParse(_) => 5,
            Error::Provider { .. } | Error::Timeout(_) => 6,
            _ => 1,
        }
    }
}
