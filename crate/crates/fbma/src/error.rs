use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("free boundary is empty: {0}")]
    EmptyFreeBoundary(String),
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("invalid structural pair: {0}")]
    InvalidPair(String),
    #[error("normalization failed: {0}")]
    NormalizationFailure(String),
    #[error("boundary replacement failed verification: {0}")]
    ReplacementInvalid(String),
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("unsupported dimension {0} for meshed operations (supported: 1, 2)")]
    UnsupportedDimension(usize),
    #[error("no radial solution: {0}")]
    NoRadialSolution(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
