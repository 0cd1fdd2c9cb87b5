use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(f64),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("invalid list design: {0}")]
    DesignInvalid(String),

    #[error("all {total} records were excluded")]
    AllRecordsExcluded { total: usize },

    #[error("degenerate cells: {0}")]
    DegenerateCells(String),

    #[error("insufficient confessors: cell (z={z}, y=1) has {count} records, need at least 2")]
    InsufficientConfessors { z: u8, count: usize },

    #[error("degenerate population parameters: {0}")]
    DegenerateParams(String),

    #[error("p-value of exactly zero supplied at position {0}")]
    ZeroPValue(usize),

    #[error("reports are not comparable: {0}")]
    MethodMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unparseable cell at row {row}, column `{column}`: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("input file is empty")]
    EmptyFile,

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
