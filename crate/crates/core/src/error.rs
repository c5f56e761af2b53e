use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong between loading a recording and scoring a test split.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel {0} has zero variance over the supplied trials")]
    ZeroVarianceChannel(usize),

    #[error("vertex {0} has zero degree")]
    ZeroDegree(usize),

    #[error("no trials supplied")]
    NoTrials,

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("invalid band-pass: {0}")]
    InvalidBand(String),

    #[error("filter produced non-finite output on channel {0}")]
    NonFiniteOutput(usize),

    #[error("epoch window of marker {0} falls outside the recording")]
    EpochOutOfBounds(usize),

    #[error("column {0} vanishes after removing the first-eigenvector component")]
    DegenerateColumn(usize),

    #[error("spectral band is empty")]
    EmptyBand,

    #[error("cut-off {cutoff} outside [1, {n}]")]
    BadCutoff { cutoff: usize, n: usize },

    #[error("no labeled trials of class {0}")]
    MissingClass(u8),

    #[error("trial {0} has vanishing spectral energy")]
    TraceUnderflow(usize),

    #[error("class covariance sum is rank deficient; directions below tolerance: {0:?}")]
    RankDeficient(Vec<usize>),

    #[error("training set holds a single class")]
    SingleClassInput,

    #[error("non-finite feature in sample {0}")]
    NonFiniteFeature(usize),

    #[error("classifier did not converge within {0} iterations")]
    TrainingDidNotConverge(usize),

    #[error("too few labeled trials for {folds}-fold cross-validation")]
    TooFewTrials { folds: usize },

    #[error("cut-off {cutoff}, fold {fold}: {source}")]
    Fold {
        cutoff: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("{path}: malformed metadata: {msg}")]
    MalformedMeta { path: PathBuf, msg: String },

    #[error("{path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: line {line}: {msg}")]
    BadMarker {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("malformed model file: {0}")]
    BadModel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Fold { source, .. } | Stage { source, .. } => source.kind(),
            Io { .. } => ErrorKind::Io,
            EigenFailure
            | NonFiniteOutput(_)
            | DegenerateColumn(_)
            | TraceUnderflow(_)
            | RankDeficient(_)
            | NonFiniteFeature(_)
            | TrainingDidNotConverge(_)
            | ZeroVarianceChannel(_)
            | ZeroDegree(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
