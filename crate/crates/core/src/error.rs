use thiserror::Error;

/// Errors produced by the krigvoi library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate training input (matches row {0})")]
    DuplicateTrainingPoint(usize),

    #[error("correlation matrix is not positive definite even with nugget {nugget:e}")]
    SingularCorrelation { nugget: f64 },

    #[error("truss stiffness matrix is singular")]
    SingularStiffness,

    #[error("candidate pool exhausted: every candidate is already a training point")]
    PoolExhausted,

    #[error("group {group}: reached the cap of {cap} added training points")]
    IterationCap { group: usize, cap: usize },

    #[error(
        "group {group}: pool enrichment limit of {limit} reached without meeting the COV threshold"
    )]
    EnrichmentLimit { group: usize, limit: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("total likelihood weight is zero")]
    ZeroWeight,

    #[error("inconsistent limit-state tuple: {0}")]
    InconsistentEvent(String),

    #[error("response model failed: {0}")]
    Oracle(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCorrelation { .. }
                | Error::SingularStiffness
                | Error::PoolExhausted
                | Error::IterationCap { .. }
                | Error::EnrichmentLimit { .. }
                | Error::ZeroWeight
                | Error::Oracle(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
