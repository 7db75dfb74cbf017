use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("crossover probability must lie in (0, 1/2), got {0}")]
    InvalidCrossover(f64),
    #[error("error tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("threshold k={k} must satisfy 1 <= k <= n={n}")]
    InvalidThreshold { k: u64, n: u64 },
    #[error("number of bits must be positive")]
    EmptyInput,
    #[error("length mismatch: got {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bit index {index} out of range for n={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("query budget of {0} queries exhausted")]
    BudgetExhausted(u64),
    #[error("degenerate budget: {0}")]
    DegenerateBudget(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_crossover(p: f64) -> Result<()> {
    if p > 0.0 && p < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidCrossover(p))
    }
}

pub(crate) fn check_tolerance(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(delta))
    }
}
