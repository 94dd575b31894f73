use thiserror::Error;

/// Errors produced by the geometry, algebra and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("focal length must be positive, got {0}")]
    InvalidFocal(f64),
    #[error("camera index {index} out of range for a rig with {len} cameras")]
    CameraIndex { index: usize, len: usize },
    #[error("viewing ray is parallel to the plane")]
    RayParallelToPlane,
    #[error("homography has rank below 2")]
    DegenerateHomography,
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("matrix is rank deficient")]
    RankDeficient,

    #[error("generator table {0} not found")]
    MissingTable(String),
    #[error("generator table {variant}: expected {expected} polynomials, found {found}")]
    CountMismatch {
        variant: String,
        expected: usize,
        found: usize,
    },
    #[error("generator table {variant}: polynomial {index} has degree {found}, expected {expected}")]
    DegreeMismatch {
        variant: String,
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("generator table {variant}: checksum mismatch")]
    ChecksumMismatch { variant: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vanishing check failed: max valid residual {max_valid:e}, min invalid residual {min_invalid:e}")]
    ValidationFailed { max_valid: f64, min_invalid: f64 },

    #[error("sample is unsolvable: {0}")]
    Unsolvable(String),
    #[error("no real roots")]
    NoRealRoots,
    #[error("all candidate solutions were filtered out")]
    AllFiltered,
    #[error("scale recovery is inconsistent with the back-substitution generators")]
    InconsistentScale,
    #[error("recovered focal length is not positive")]
    NegativeFocal,
    #[error("scale denominator vanishes")]
    ScaleDenominatorZero,

    #[error("need at least 5 matches, got {0}")]
    NotEnoughMatches(usize),
    #[error("no solvable sample pattern found after {0} attempts")]
    NoSolvablePattern(usize),
    #[error("no sample produced a model")]
    NoModelFound,

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
