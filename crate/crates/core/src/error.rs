use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed files, invalid arguments, inconsistent shapes.
    Data,
    /// The numerics broke down: dead topic, objective moved the wrong way.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} index {index} >= {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative count {value} at (term {v}, doc {d})")]
    NegativeCount { v: usize, d: usize, value: f64 },

    #[error("non-finite value at (row {row}, col {col})")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate entry at (term {v}, doc {d})")]
    DuplicateEntry { v: usize, d: usize },

    #[error("degenerate column {0}")]
    DegenerateColumn(usize),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("infinite divergence: x > 0 but reconstruction is 0 at (term {v}, doc {d})")]
    InfiniteDivergence { v: usize, d: usize },

    #[error("unrepresentable term {v} in doc {d}: every topic assigns it zero mass")]
    UnrepresentableTerm { v: usize, d: usize },

    #[error("dead topic {0}")]
    DeadTopic(usize),

    #[error("document {0} has no counts")]
    EmptyDocument(usize),

    #[error("count mismatch: counts sum to {found}, expected N = {expected}")]
    CountMismatch { expected: f64, found: f64 },

    #[error("{func} requires a positive argument, got {x}")]
    Domain { func: &'static str, x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-uniform Gamma rates: the GaP/LDA iterate identity needs a_k = a for all k")]
    NonUniformRate,

    #[error("no progress at iteration {iter}: objective moved from {before} to {after}")]
    NoProgress { iter: usize, before: f64, after: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u32),

    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("documents empty after vocabulary filtering: {}", .0.join(", "))]
    EmptyDocuments(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DeadTopic(_)
            | Error::NoProgress { .. }
            | Error::InfiniteDivergence { .. }
            | Error::UnrepresentableTerm { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
