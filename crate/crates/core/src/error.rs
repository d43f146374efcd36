use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate eigenvalue: {0}")]
    DegenerateEigenvalue(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("oracle fault: {0}")]
    OracleFault(String),

    /// A finite-difference quotient produced non-finite entries. Both one-sided
    /// evaluations are kept so the caller can see which side blew up.
    #[error("numerical fault: {message} (first offending indices: {indices:?})")]
    NumericalFault {
        message: String,
        indices: Vec<usize>,
        f_plus: Vec<f64>,
        f_minus: Vec<f64>,
    },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("Krylov breakdown: {0}")]
    Breakdown(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::NumericalFault {
            message: message.into(),
            indices: Vec::new(),
            f_plus: Vec::new(),
            f_minus: Vec::new(),
        }
    }
}
