//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Geometry is too degenerate to process (coplanar cloud, zero-area face, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A constraint gradient vanished (e.g. coincident endpoints).
    #[error("singular constraint gradient: {0}")]
    SingularGradient(String),

    /// The solver produced non-finite values.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// A rig, its weights, or a pose referencing it is inconsistent.
    #[error("invalid rig: {0}")]
    InvalidRig(String),

    /// File could not be read or written.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// File content does not match the expected format.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
