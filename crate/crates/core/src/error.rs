use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid label space {size_x}x{size_y}x{size_z}: need I >= 2, J >= 2, K >= 1")]
    InvalidLabelSpace {
        size_x: usize,
        size_y: usize,
        size_z: usize,
    },

    #[error("coordinate out of range: {0}")]
    OutOfRange(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("empty sample")]
    EmptySample,

    #[error("absolute continuity violated at cell {cell}")]
    AbsoluteContinuity { cell: usize },

    #[error("label spaces differ")]
    SpaceMismatch,

    #[error("mixture parameter {0} outside [0, 1]")]
    InvalidLambda(f64),

    #[error("unknown stratum in conditional: z = {0}")]
    UnknownStratum(usize),

    #[error("invalid conditional table: {0}")]
    InvalidConditional(String),

    #[error("invalid resample plan: {0}")]
    InvalidPlan(String),

    #[error("inconsistent margins: {0}")]
    InconsistentMargins(String),

    #[error("enumeration too large: {count} tables exceed cap {cap}")]
    EnumerationTooLarge { count: f64, cap: usize },

    #[error("gradient requires strictly positive pmf (cell {cell} is {value})")]
    NonPositivePmf { cell: usize, value: f64 },

    #[error("M identities hold only at CI distributions (cmi = {0})")]
    NotConditionallyIndependent(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid degrees of freedom: {0}")]
    InvalidDf(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incomplete gamma did not converge for a = {a}, x = {x}")]
    NoConvergence { a: f64, x: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
