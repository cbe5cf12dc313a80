use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("gate {kind} requires distinct qubits, got {qubits:?}")]
    DuplicateQubits { kind: String, qubits: Vec<usize> },

    #[error("gate {kind} expects {expected} qubit(s), got {got}")]
    GateArity { kind: String, expected: usize, got: usize },

    #[error("gate {kind}: angle must be present iff the gate is parameterized")]
    AngleMismatch { kind: String },

    #[error("channel {name}: Kraus operators are not complete (deviation {deviation:e})")]
    IncompleteChannel { name: String, deviation: f64 },

    #[error("{what}: probability {value} outside [0, 1]")]
    ProbabilityRange { what: String, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("circuit already carries woven device noise")]
    AlreadyNoisy,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("{file}:{line}: {message}")]
    Csv { file: String, line: usize, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unknown device profile {0:?}")]
    UnknownDevice(String),

    #[error("victim query {index} failed after {attempts} attempt(s): {message}")]
    QueryFailed { index: usize, attempts: usize, message: String },

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { context: path.into(), source }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { path: path.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
