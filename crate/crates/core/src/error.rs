use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    Rank(Vec<usize>),
    #[error("batch norm in train mode needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("item index {index} outside vocabulary of size {size}")]
    Vocabulary { index: usize, size: usize },
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("events for user {user} are not sorted by timestamp (position {position})")]
    Ordering { user: String, position: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("split produced {train} train and {test} test sessions")]
    Split { train: usize, test: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lane {0} is inactive")]
    InactiveLane(usize),
    #[error("TOP1 loss is undefined without negatives")]
    UndefinedLoss,
    #[error("evaluation error: {0}")]
    Evaluation(&'static str),
    #[error("load error: {0}")]
    Load(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
