use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, arity, range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input is well-formed but mathematically unusable (zero norm, zero variance).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("training did not converge after {iterations} iterations (max KKT violation {violation:.3e})")]
    Training { iterations: usize, violation: f64 },

    #[error("transcoder failed on {path}: {diagnostics}")]
    Transcoder { path: PathBuf, diagnostics: String },

    #[error("missing embeddings for {} video(s): {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
