use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric cell at row {row}, column {column}: {cell:?}")]
    NonNumeric {
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("filter removed every row")]
    EmptyResult,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate scale in column {column}: {reason}")]
    DegenerateScale { column: String, reason: String },

    #[error("matrix columns must be sorted ascending for this operation")]
    NotSorted,

    #[error("class partition error: {0}")]
    Partition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
