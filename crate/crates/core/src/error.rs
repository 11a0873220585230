use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("probabilities do not sum to one: {0}")]
    Simplex(String),

    #[error("class index {class} out of range for {classes} classes")]
    ClassIndex { class: usize, classes: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("missing evaluation cell: {0}")]
    MissingCell(String),

    #[error("bad magic bytes in {}", .0.display())]
    BadMagic(PathBuf),

    #[error("unsupported array header in {}: {msg}", .path.display())]
    BadHeader { path: PathBuf, msg: String },

    #[error("unsupported dtype {dtype} in {}", .path.display())]
    BadDtype { path: PathBuf, dtype: String },

    #[error("shape rank {rank} in {}, expected {expected}", .path.display())]
    BadRank {
        path: PathBuf,
        rank: usize,
        expected: usize,
    },

    #[error("malformed record: {0}")]
    Record(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short code used in the CLI's single-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Range(_) => "range",
            Error::Simplex(_) => "simplex",
            Error::ClassIndex { .. } => "class_index",
            Error::Argument(_) => "argument",
            Error::Undefined(_) => "undefined",
            Error::MissingCell(_) => "missing_cell",
            Error::BadMagic(_) => "bad_magic",
            Error::BadHeader { .. } => "bad_header",
            Error::BadDtype { .. } => "bad_dtype",
            Error::BadRank { .. } => "bad_rank",
            Error::Record(_) => "record",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Process exit status for the CLI. 2 is reserved for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) => 3,
            Error::Io(_) => 4,
            Error::BadMagic(_) => 10,
            Error::BadHeader { .. } => 11,
            Error::BadDtype { .. } => 12,
            Error::BadRank { .. } => 13,
            Error::Shape(_) => 14,
            Error::Range(_) => 15,
            Error::Simplex(_) => 16,
            Error::ClassIndex { .. } => 17,
            Error::Undefined(_) => 20,
            Error::MissingCell(_) => 21,
            Error::Record(_) | Error::Csv(_) | Error::Json(_) => 22,
        }
    }
}
