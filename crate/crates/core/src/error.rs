use std::path::PathBuf;

use thiserror::Error;

/// Every failure the registration pipeline can report.
///
/// Variants are grouped by the stage that raises them so that callers (the
/// CLI in particular) can map each class to a stable exit code via
/// [`Error::class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular transform (|det| = {det:e})")]
    SingularTransform { det: f64 },
    #[error("downsampling rate {rate} too high: min dimension {min_dim} / {rate} < 128")]
    RateTooHigh { rate: usize, min_dim: usize },
    #[error("image too small for feature detection: {width}x{height} (need >= 64)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("warped footprint overlaps source by {overlap:.3} (need >= 0.25)")]
    InsufficientOverlap { overlap: f64 },

    #[error("too few matches: {found} (need >= {needed})")]
    TooFewMatches { found: usize, needed: usize },
    #[error("degenerate point configuration (condition number {condition:e})")]
    DegenerateConfiguration { condition: f64 },
    #[error("RANSAC found no consensus: best inlier count {best} < {needed}")]
    NoConsensus { best: usize, needed: usize },

    #[error("slice constraints unsatisfiable: reached proportion {reached:.5}, target {target:.5}")]
    ConstraintUnsatisfiable { reached: f64, target: f64 },
    #[error("empty support: no slice pixel maps inside the moving image")]
    EmptySupport,

    #[error("flat image: zero variance in correlation window")]
    FlatImage,
    #[error("no feature pairs within radius {radius}")]
    NoPairs { radius: f64 },
}

/// Coarse error classes, one per CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    RateBound,
    Matching,
    Constraint,
    EmptySupport,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Io => 3,
            ErrorClass::RateBound => 4,
            ErrorClass::Matching => 5,
            ErrorClass::Constraint => 6,
            ErrorClass::EmptySupport => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Io => "io",
            ErrorClass::RateBound => "rate_bound",
            ErrorClass::Matching => "matching",
            ErrorClass::Constraint => "constraint",
            ErrorClass::EmptySupport => "empty_support",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::MalformedHeader { .. } | Error::UnsupportedFormat(_) => {
                ErrorClass::Io
            }
            Error::RateTooHigh { .. } => ErrorClass::RateBound,
            Error::TooFewMatches { .. }
            | Error::NoConsensus { .. }
            | Error::DegenerateConfiguration { .. }
            | Error::NoPairs { .. } => ErrorClass::Matching,
            Error::ConstraintUnsatisfiable { .. } | Error::InsufficientOverlap { .. } => {
                ErrorClass::Constraint
            }
            Error::EmptySupport => ErrorClass::EmptySupport,
            Error::InvalidInput(_)
            | Error::SingularTransform { .. }
            | Error::ImageTooSmall { .. }
            | Error::FlatImage => ErrorClass::Usage,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedHeader {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
