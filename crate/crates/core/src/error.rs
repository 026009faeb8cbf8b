use std::path::PathBuf;

use crate::types::ClassId;

pub type Result<T, E = AliceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AliceError {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("probability vector invalid: {0}")]
    InvalidProbability(String),

    #[error("class {0} is not part of the label space")]
    UnknownClass(ClassId),

    #[error("dataset invalid: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input value")]
    NonFinite,

    #[error("every error value is infinite; the error function is degenerate on this data")]
    DegenerateErrors,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance factorization failed for class {0} after regularization")]
    Factorization(ClassId),

    #[error("classes absent from the training set: {0:?}")]
    MissingClasses(Vec<ClassId>),

    #[error("label spaces do not match: {0}")]
    LabelSpaceMismatch(String),

    #[error("average precision is undefined without positive examples")]
    NoPositives,

    #[error("no delta on the grid produced a defined average precision")]
    AllDeltasUndefined,

    #[error("csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: missing label column `{column}`")]
    MissingLabelColumn { path: PathBuf, column: String },

    #[error("{path}: non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("document format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
