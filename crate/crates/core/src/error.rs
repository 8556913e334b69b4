use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed prices CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        date: NaiveDate,
        ticker: String,
        value: f64,
    },

    #[error("duplicate date {0} in prices CSV")]
    DuplicateDate(NaiveDate),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("window {start}..{end} outside panel of {rows} rows")]
    WindowOutOfRange { start: usize, end: usize, rows: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight exponent {exponent:.3} exceeds 700; rescale parameters (alpha, beta, lambda)")]
    Overflow { exponent: f64 },

    #[error("time step too large; reduce dt (column {column} decays by {decay:.6} >= 1)")]
    TimeStepTooLarge { column: usize, decay: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("correlation target is not positive definite")]
    NotPositiveDefinite,

    #[error("rate matrix is reducible or has invalid entries: {0}")]
    Reducible(String),

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the input data rather than by parameters or I/O.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedCsv { .. }
                | Error::NonPositivePrice { .. }
                | Error::DuplicateDate(_)
                | Error::InsufficientData(_)
                | Error::InsufficientHistory(_)
                | Error::WindowOutOfRange { .. }
                | Error::Csv(_)
        )
    }
}
