use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate bins: {0}")]
    DegenerateBins(String),

    #[error("invalid bin schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("non-finite loss in term `{term}` at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    CsvParse(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
