use std::fmt;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point #{point} is out of range in dimension {dim}: coordinate {coord} not in [0, {extent})")]
    PointOutOfRange {
        point: usize,
        dim: usize,
        coord: u64,
        extent: u32,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("region {region} does not fit in extents {extents:?}")]
    RegionOutOfExtents { region: String, extents: Vec<u32> },

    #[error("partition set is invalid: {0}")]
    InvalidPartition(String),

    #[error("privacy budget exceeded: recording {requested} under {scope} would raise spent to {would_spend} > total {total}\n{dump}")]
    BudgetExceeded {
        requested: f64,
        scope: String,
        would_spend: f64,
        total: f64,
        dump: String,
    },

    #[error("ledger audit failed: spent {spent} exceeds total {total}\n{dump}")]
    AuditFailed { spent: f64, total: f64, dump: String },

    #[error("method is infeasible for this input: {0}")]
    Infeasible(String),

    #[error("golden-section search failed to bracket a minimum: {0}")]
    BracketFailure(String),

    #[error("sampling rejected: {0}")]
    Sampling(String),

    #[error("{0}")]
    Parse(ParseError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Location-aware parse failure for the text formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line number, 0 when the error concerns the file as a whole.
    pub line: usize,
    /// Byte offset of the start of the offending line (or of end-of-file).
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at line {} (byte offset {}): {}",
            self.line, self.offset, self.message
        )
    }
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
