use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis index {index} out of range for {num_qubits} qubits")]
    BasisIndexOutOfRange { index: usize, num_qubits: usize },

    #[error("invalid qubit set: {0}")]
    InvalidQubits(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested measurement outcome has (numerically) zero probability.
    #[error("impossible post-selection on qubit {qubit} (outcome {outcome}, probability {probability:e})")]
    ImpossiblePostSelection {
        qubit: usize,
        outcome: u8,
        probability: f64,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("angle {0} lies on a tangent pole")]
    TangentPole(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no shots survived post-selection out of {shots}")]
    NoAcceptedShots { shots: u64 },

    #[error("distribution dimension mismatch: {0} bits vs {1} bits")]
    DimensionMismatch(usize, usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
