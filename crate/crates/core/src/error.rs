use thiserror::Error;

/// Errors raised by the model, inference and evaluation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes or required fields do not line up (parent counts, missing fields, widths).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid value for {field}: {reason}")]
    InvalidValue { field: String, reason: String },

    #[error("symptom graph contains a cycle through node {0}")]
    Cycle(usize),

    #[error("topological order is inconsistent with the adjacency: {0}")]
    OrderInconsistent(String),

    #[error("query has no unobserved discrete variable")]
    EmptyQuery,

    #[error("variable {0} is both evidence and target")]
    EvidenceTargetOverlap(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler failure: {0}")]
    Sampler(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn value(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
