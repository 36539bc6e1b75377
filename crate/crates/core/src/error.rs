use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Coarse classification used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Inputs or configuration violate a precondition.
    Validation,
    /// A numerical procedure could not produce a usable result.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input is empty: {0}")]
    EmptyInput(String),
    #[error("no weather record within tolerance of segment {start}..{end}")]
    NoWeatherCoverage { start: i64, end: i64 },
    #[error("multi-split exclusion requested but room {0} has no compressor id")]
    MissingCompressorId(String),
    #[error("no room has at least {n_seg_min} valid segments")]
    NoQualifiedRooms { n_seg_min: usize },
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("actual value {value} at index {index} is not positive")]
    ZeroActual { index: usize, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{n} segments cannot be split into {k} folds")]
    TooFewSegments { n: usize, k: usize },
    #[error("every candidate structure failed for room {0}")]
    AllStructuresFailed(String),
    #[error("need at least {need} residuals, got {got}")]
    TooFewResiduals { need: usize, got: usize },
    #[error("k = {k} exceeds the number of points {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("percentile of an empty sample")]
    EmptySample,
    #[error("no overlap between rooms even at the min/max range")]
    NoOverlap,
    #[error("sample sizes differ within a cluster: {0} vs {1}")]
    SampleSizeMismatch(usize, usize),
    #[error("unknown factor {0:?}")]
    UnknownFactor(String),
    #[error("unknown model structure {0:?}")]
    UnknownStructure(String),
    #[error("invalid fleet specification: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::AllStructuresFailed(_) | Error::NonFinite(_) | Error::NoOverlap => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Validation,
        }
    }
}
