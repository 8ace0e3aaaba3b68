use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {field} = {value} is outside its allowed range {range}")]
    Range {
        field: &'static str,
        value: String,
        range: &'static str,
    },

    #[error("inconsistent protocol: {0}")]
    Inconsistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown preset `{0}` (expected one of cv-baseline, comm, new)")]
    UnknownPreset(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("label {label} at {path}:{row} is outside [0, {n_classes})")]
    Label {
        path: PathBuf,
        row: usize,
        label: i64,
        n_classes: usize,
    },

    #[error("window length {window_length} exceeds series length {series_length}")]
    WindowTooLong {
        window_length: usize,
        series_length: usize,
    },

    #[error("subject {0} is not part of the dataset")]
    UnknownSubject(u32),

    #[error("class {0} has no training window")]
    EmptyClass(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite loss ({0})")]
    Numerical(f64),

    #[error("parameter `{0}` became non-finite during the update")]
    NonFiniteUpdate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
