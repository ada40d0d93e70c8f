use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("missing data for `{key}`: {msg}")]
    MissingData { key: String, msg: String },

    #[error("sequence of length {len} exceeds max_len {max}")]
    Length { len: usize, max: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 covers configuration and checkpoint problems, 2 data problems and
    /// 3 numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => 1,
            Error::Parse { .. }
            | Error::Data { .. }
            | Error::MissingData { .. }
            | Error::Length { .. }
            | Error::Io(_) => 2,
            Error::NonFinite(_) => 3,
            Error::Shape { .. } | Error::Domain(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
