use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed edge line: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("edge list {path} contains no edges")]
    EmptyEdgeList { path: PathBuf },

    #[error("split ratio must lie in (0, 1), got {0}")]
    BadSplitRatio(f64),

    #[error("source {0} has no edges; every source needs at least one edge")]
    IsolatedSource(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cluster count {k} exceeds node count {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("source {0} interacts with every destination; no negative sample exists")]
    NoNegativeCandidate(u32),

    #[error("non-finite value in {context} (epoch {epoch}, batch {batch})")]
    Diverged {
        context: String,
        epoch: usize,
        batch: usize,
    },

    #[error("non-finite gradient passed to optimizer")]
    NonFiniteGradient,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{path}: bad magic (expected \"SGBH\")")]
    BadMagic { path: PathBuf },

    #[error("{path}: unsupported codebook version {found} (expected {expected})")]
    BadVersion {
        path: PathBuf,
        found: u16,
        expected: u16,
    },

    #[error("{path}: truncated codebook: expected {expected} payload bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("codebook holds {codebook} nodes but graph has {graph}")]
    SizeMismatch { codebook: usize, graph: usize },

    #[error("no test edges; nothing to evaluate")]
    NoTestEdges,

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
