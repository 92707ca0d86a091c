use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path} at line {line}: {reason}")]
    MalformedFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("label `{0}` is not an attribute of the data file")]
    UnknownLabel(String),

    #[error("non-numeric feature value `{value}` (row {row}, column {column})")]
    NonNumericFeature {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("missing value in row {row}, column {column}")]
    MissingValue { row: usize, column: usize },

    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("label value `{value}` is not binary (row {row}, column {column})")]
    NonBinaryLabel {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("dataset has {0} samples, at least 2 are required")]
    EmptyDataset(usize),

    #[error("split leaves no samples for the stream")]
    StreamEmpty,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} rules")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("weighted Hessian is singular even after regularization")]
    SingularHessian,

    #[error("non-finite value encountered in {0}")]
    NonFiniteInput(&'static str),

    #[error("sample has no positive label")]
    NoPositiveLabel,

    #[error("initial batch has {found} samples, cross-validation needs at least {needed}")]
    BatchTooSmall { needed: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} is not supported by this model")]
    Unsupported(&'static str),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fails with `DimensionMismatch` unless `found == expected`.
pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
