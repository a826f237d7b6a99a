use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel moment of order {0} is not supported (expected 0..=4)")]
    UnsupportedMoment(u32),

    #[error("no observation has positive kernel weight at t = {t}")]
    NoLocalData { t: f64 },

    #[error("conditional-CDF weights degenerate at t = {t} (raw total {total_raw:e})")]
    DegenerateWeights { t: f64, total_raw: f64 },

    #[error("every local fit failed at t = {t}")]
    AllFitsFailed { t: f64 },

    #[error("insufficient data: need more than {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("bandwidth scale must be positive and finite: {0}")]
    InvalidScale(String),

    #[error("sample standard deviation of the treatment is zero")]
    ZeroVariance,

    #[error("bound is empty: lower {lo} exceeds upper {hi}")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("gradient component g_{coord} is zero at level-set point {point}")]
    ZeroGradient { point: usize, coord: usize },

    #[error("{failed} of {total} bootstrap replicates failed (limit is 10%)")]
    TooManyFailedReplicates { failed: usize, total: usize },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no data rows")]
    EmptyData,

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::UnsupportedMoment(_) => "UnsupportedMoment",
            Error::NoLocalData { .. } => "NoLocalData",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::AllFitsFailed { .. } => "AllFitsFailed",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::InvalidScale(_) => "InvalidScale",
            Error::ZeroVariance => "ZeroVariance",
            Error::EmptyInterval { .. } => "EmptyInterval",
            Error::ZeroGradient { .. } => "ZeroGradient",
            Error::TooManyFailedReplicates { .. } => "TooManyFailedReplicates",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Parse { .. } => "ParseError",
            Error::EmptyData => "EmptyData",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
