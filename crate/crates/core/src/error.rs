use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {op}: {msg}")]
    Dimension { op: &'static str, msg: String },

    #[error("index out of range in {op}: {index} >= {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("unknown edge ({0}, {1})")]
    UnknownEdge(usize, usize),

    #[error("oracle: {0}")]
    Oracle(#[from] crate::oracle::OracleError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            msg: msg.into(),
        }
    }
}
