use thiserror::Error;

/// Errors produced by chain parsing, solvers, training, and file IO.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown builtin chain `{0}` (expected planar3, arm6 or chain15)")]
    UnknownChain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("target is not a planar pose (z component or tilt exceeds tolerance)")]
    NonPlanarTarget,

    #[error("chain `{0}` is not supported by this analytical solver: {1}")]
    AnalyticalUnsupported(String, String),

    #[error("degenerate sin/cos pair at joint {0}: both components ~0")]
    DegeneratePair(usize),

    #[error("zero-norm quaternion")]
    ZeroNormQuaternion,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("rejection sampling budget exceeded after {0} proposals")]
    RejectionBudget(usize),

    #[error("antipodal endpoint orientations: interpolation is ill-defined")]
    AntipodalOrientations,

    #[error("chain mismatch: expected `{expected}`, found `{found}`")]
    ChainMismatch { expected: String, found: String },

    #[error("malformed {kind} file: {reason}")]
    FileFormat { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
