use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least 2 distinct labeled classes, found {found}")]
    TooFewClasses { found: usize },

    #[error("class {class} has {available} examples, cannot label {requested}")]
    ClassTooSmall {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("example {index} has no label; splitting needs a fully labeled dataset")]
    MissingLabel { index: usize },

    #[error("k = {k} must be smaller than the number of nodes ({n})")]
    NeighborCount { k: usize, n: usize },

    #[error("node {node} has zero degree")]
    IsolatedNode { node: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curriculum index {index} is not in the remaining unlabeled set")]
    CurriculumOverlap { index: usize },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("matrix is numerically singular")]
    Singular,
}
