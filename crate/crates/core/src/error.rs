use thiserror::Error;

/// Errors produced by the structured solvers and the ODE pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),
    #[error("corner block not allowed for kind {0}")]
    CornerForbidden(String),
    #[error("matrix of order {n} exceeds the dense limit {limit}")]
    TooLargeForDense { n: usize, limit: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),
    #[error("too many partitions: {0}")]
    TooManyPartitions(String),
    #[error("unsupported kind: {0}")]
    UnsupportedKind(String),
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("matrix has no corner block to permute")]
    NothingToPermute,
    #[error("zero pivot at local row {0}")]
    ZeroPivot(usize),
    #[error("singular block at local row {0}")]
    SingularBlock(usize),
    #[error("every pivot block of the body was deferred to the reduced system")]
    ExhaustedBody,
    #[error("singular factor")]
    SingularFactor,
    #[error("partition {partition}: {source}")]
    Partition {
        partition: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("singular reduced system at row {0}")]
    SingularReducedSystem(usize),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("step too large: window matrix of window {0} is singular")]
    StepTooLarge(usize),
    #[error("singular window matrix in window {0}")]
    SingularWindow(usize),
    #[error("matrix exponential failed: {0}")]
    ExpmFailure(String),
    #[error("not converged after {0} iterations")]
    NotConverged(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidBandwidth(_) => "InvalidBandwidth",
            Error::CornerForbidden(_) => "CornerForbidden",
            Error::TooLargeForDense { .. } => "TooLargeForDense",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Parse { .. } => "ParseError",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::TooManyPartitions(_) => "TooManyPartitions",
            Error::UnsupportedKind(_) => "UnsupportedKind",
            Error::UnsupportedStructure(_) => "UnsupportedStructure",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::NothingToPermute => "NothingToPermute",
            Error::ZeroPivot(_) => "ZeroPivot",
            Error::SingularBlock(_) => "SingularBlock",
            Error::ExhaustedBody => "ExhaustedBody",
            Error::SingularFactor => "SingularFactor",
            Error::Partition { source, .. } => source.code(),
            Error::SingularReducedSystem(_) => "SingularReducedSystem",
            Error::InvalidInterval(_) => "InvalidInterval",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::SingularWindow(_) => "SingularWindow",
            Error::ExpmFailure(_) => "ExpmFailure",
            Error::NotConverged(_) => "NotConverged",
            Error::Io(_) => "Io",
        }
    }

    /// True for input/format problems, false for numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidBandwidth(_)
                | Error::CornerForbidden(_)
                | Error::TooLargeForDense { .. }
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::UnsupportedVersion(_)
                | Error::TooManyPartitions(_)
                | Error::UnsupportedKind(_)
                | Error::UnsupportedStructure(_)
                | Error::IndexOutOfRange { .. }
                | Error::NothingToPermute
                | Error::InvalidInterval(_)
                | Error::Io(_)
        )
    }

    pub(crate) fn in_partition(self, partition: usize) -> Error {
        Error::Partition {
            partition,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
