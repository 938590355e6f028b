use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op} is not supported for {dist}")]
    Unsupported { op: &'static str, dist: String },
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("truncated gamma has numerically zero mass above the lower bound {bound}")]
    EmptyTruncation { bound: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dataset is not ordered by q-value; call reorder_by_q first")]
    NotReordered,
    #[error("every coordinate of the starting permutation has zero prior density")]
    ZeroDensity,
    #[error("log-target difference is NaN; the prior evaluator returned an invalid value")]
    NanDelta,
    #[error("degenerate theta vector: {0}")]
    DegenerateTheta(&'static str),
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed record at {path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
