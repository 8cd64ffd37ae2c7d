use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("kernel family `{0}` does not have polynomial eigendecay")]
    NotPolynomialEigendecay(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid eigendecay profile: {0}")]
    InvalidProfile(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no fixed point after {iterations} iterations (last value {last})")]
    NoFixedPoint { iterations: usize, last: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
