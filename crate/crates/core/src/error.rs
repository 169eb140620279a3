use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("input contains no data rows")]
    Empty,

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {cell:?} as a number")]
    ParseCell {
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: usize, column: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid attribute range [{start}, {end}) for {dims} attributes")]
    InvalidRange {
        start: usize,
        end: usize,
        dims: usize,
    },

    #[error("neighbor rank {k} out of range: {available} usable reference rows")]
    NeighborOutOfRange { k: usize, available: usize },

    #[error("depth {depth} is too deep for {dims} attributes")]
    DepthTooLarge { depth: usize, dims: usize },

    #[error("score context was built for {expected}, not {found}")]
    ContextMismatch { expected: String, found: String },

    #[error("node {0} has no sibling")]
    NoSibling(String),

    #[error("child label is unvisited")]
    Unvisited,

    #[error("class labels are required")]
    MissingLabels,

    #[error("at least two classes are required")]
    SingleClass,

    #[error("linear system is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
