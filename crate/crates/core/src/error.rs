use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
    #[error("value {0} lies outside [0, 1]")]
    OutOfUnitInterval(String),
    #[error("boundary path must start on the left edge (s = 0)")]
    BadStart,
    #[error("boundary path must end on the top edge (b = 1)")]
    BadEnd,
    #[error("boundary path is not monotone at vertex {0}")]
    NotMonotone(usize),
    #[error("boundary segment {0} is not axis parallel")]
    NotAxisParallel(usize),
    #[error("mechanism is empty")]
    EmptyMechanism,
    #[error("grid step must be a positive power of two no larger than 1/2")]
    BadStep,
    #[error("grid too large for exhaustive enumeration ({0} nodes)")]
    GridTooLarge(usize),
    #[error("precision exponent {0} is out of range")]
    BadPrecision(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("sample {0} does not lie on the segment")]
    OffSegment(String),
    #[error("notch half-width must be positive and smaller than the resolution")]
    NotchTooWide,
    #[error("replay stream exhausted at round {0}")]
    ReplayExhausted(u64),
    #[error("adversarial certificate failed: {0}")]
    Certificate(String),
    #[error("expectation is not available for this environment")]
    NoExactExpectation,
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("parse failure: {0}")]
    Parse(String),
}

impl Error {
    /// Whether the error stems from user input rather than execution.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::ReplayExhausted(_) | Error::Certificate(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
