use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no samples")]
    EmptyInput,

    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("line {line}, column {column}: {reason}")]
    MalformedCell { line: usize, column: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alpha[{index}] = {value} lies outside the box [0, {c}]")]
    BoxViolation { index: usize, value: f64, c: f64 },

    #[error("duality gap {gap:e} is negative beyond rounding (primal {primal}, dual {dual})")]
    NegativeGap { gap: f64, primal: f64, dual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("iterate is not certified: gap {gap:e} exceeds required {required:e}")]
    Uncertified { gap: f64, required: f64 },

    #[error("partition invariant violated: {0}")]
    Partition(String),

    #[error("benchmark records do not form a complete grid: {0}")]
    MismatchedGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input or parameters rather than by the
    /// optimization itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::EmptyInput
                | Error::Malformed { .. }
                | Error::MalformedCell { .. }
                | Error::DimensionMismatch { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
