use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid corpus: {0}")]
    Corpus(String),

    #[error("record {id}: embedding has {found} dimensions, expected {expected}")]
    EmbeddingDim {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("degenerate input: node {id} has a zero-norm embedding")]
    ZeroNorm { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown node id: {0}")]
    UnknownNode(String),

    #[error("no nodes in split {0}")]
    EmptySplit(String),

    #[error("numerical divergence at epoch {epoch}: objective is {value}")]
    Divergence { epoch: usize, value: f64 },

    #[error("{}: {source}", display_io(path, source))]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn display_io(path: &std::path::Path, source: &std::io::Error) -> String {
    if source.kind() == std::io::ErrorKind::NotFound {
        format!("file not found: {}", path.display())
    } else {
        format!("i/o error on {}", path.display())
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, line: usize, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            line,
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
