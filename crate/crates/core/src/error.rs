use std::path::PathBuf;

use autodiff::AutodiffError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems with dataset files or split discipline. Each names where it happened.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("{path}:{line}: cannot parse {value:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("{path}:{line}: expected {expected} values, found {found}")]
    Ragged {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: non-finite value")]
    NonFinite { path: PathBuf, line: usize },
    #[error("{path}:{line}: unknown class id {id}")]
    UnknownClass { path: PathBuf, line: usize, id: usize },
    #[error("{path}:{line}: unknown split name {name:?}")]
    UnknownSplit {
        path: PathBuf,
        line: usize,
        name: String,
    },
    #[error("{path}:{line}: index {index} out of range")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
    },
    #[error("{path}:{line}: instance {index} already assigned to a split")]
    DuplicateIndex {
        path: PathBuf,
        line: usize,
        index: usize,
    },
    #[error("instance {index} appears in more than one split")]
    SplitOverlap { index: usize },
    #[error("split {split} contains instance {index} of class {class}, which is not {expected}")]
    SplitClass {
        split: &'static str,
        index: usize,
        class: usize,
        expected: &'static str,
    },
    #[error("class {class} is both seen and unseen")]
    ClassOverlap { class: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("parameter {index} has no gradient")]
    MissingGradient { index: usize },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("stage {stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fails with [`Error::Numeric`] if `value` is NaN or infinite.
pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(what.to_string()))
    }
}
