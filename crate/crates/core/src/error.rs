use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("averaging weight overflow at t={t} (alpha={alpha})")]
    WeightOverflow { t: usize, alpha: f64 },

    #[error("averaging update out of order: expected t={expected}, got t={got}")]
    NotSequential { expected: usize, got: usize },

    #[error("averaging state has no updates")]
    NoUpdates,

    #[error("suffix average finalized at t={t} before horizon {horizon}")]
    BeforeHorizon { t: usize, horizon: usize },

    #[error("iterate diverged at t={t}; last finite iterate at t={last_finite}")]
    Diverged { t: usize, last_finite: usize },

    #[error("stochastic gradient norm {norm} exceeds declared bound {bound} at t={t}")]
    GradientBound { t: usize, norm: f64, bound: f64 },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing required input `{0}`")]
    MissingInput(&'static str),

    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by malformed input data rather than numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::EmptyDataset | Error::DimensionMismatch { .. }
        )
    }
}
