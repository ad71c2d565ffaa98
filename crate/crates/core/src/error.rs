use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid response curve: {0}")]
    InvalidCurve(String),
    #[error("calibration needs at least 3 images, got {0}")]
    CalibrationInsufficient(usize),
    #[error("every sampled pixel is saturated; the stack carries no usable signal")]
    DegenerateStack,
    #[error("need at least 8 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate two-view geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("alignment needs at least 3 associated poses, got {0}")]
    AlignmentInsufficient(usize),
    #[error("positions are rank deficient (collinear or coincident)")]
    RankDeficient,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
