use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{format} parse error: {message}")]
    Parse { format: &'static str, message: String },

    #[error("non-triangular face at face {face} ({arity} vertices)")]
    NonTriangularFace { face: usize, arity: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("decimation failed: {0}")]
    Decimation(String),

    #[error("audio error: {0}")]
    Audio(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("topology mismatch: checkpoint expects {expected}, assets hash to {found}")]
    TopologyMismatch { expected: String, found: String },

    #[error("non-finite loss term `{term}` at epoch {epoch}, batch {batch}")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(format: &'static str, message: impl Into<String>) -> Self {
        Error::Parse {
            format,
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NonTriangularFace { .. } => "non_triangular_face",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::InvalidTopology(_) => "invalid_topology",
            Error::Shape(_) => "shape",
            Error::Decimation(_) => "decimation",
            Error::Audio(_) => "audio",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::TopologyMismatch { .. } => "topology_mismatch",
            Error::NonFinite { .. } => "non_finite",
        }
    }
}
