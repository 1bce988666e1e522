use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integration blew up at t = {time} (non-finite state)")]
    IntegrationBlowup { time: f64 },

    #[error("degenerate profile: first-harmonic amplitude {amplitude:e} below {tolerance:e}")]
    DegenerateProfile { amplitude: f64, tolerance: f64 },

    #[error("nonpositive diffusion D = {value:e} at v = {v}")]
    NonpositiveDiffusion { v: f64, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient least-squares system")]
    RankDeficient,

    #[error("no barrier: potential is not double-welled ({0})")]
    NoBarrier(String),

    #[error("reference bump did not converge: {0}")]
    ReferenceNotConverged(String),

    #[error("lift failed: {0}")]
    LiftFailed(String),

    #[error("zero degree for data point {index} (isolated point)")]
    ZeroDegree { index: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("preprocessing failed: {0}")]
    Preprocess(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
