use thiserror::Error;

pub type Result<T> = std::result::Result<T, MspnError>;

#[derive(Debug, Error)]
pub enum MspnError {
    /// A CSV cell was missing or could not be parsed. `row` is 1-based and
    /// counts data rows only (the header is row 0).
    #[error("ingest error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dim { expected: usize, found: usize },

    #[error("insufficient data: need at least {needed} rows, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("query error: {0}")]
    Query(String),

    #[error("conditioning on an event with zero probability")]
    Conditioning,

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
