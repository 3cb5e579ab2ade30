//! Serialization formats and the HTTP service of the `mddbayes` tool.

pub mod artifact;
pub mod dataset;
pub mod server;
pub mod wire;

use thiserror::Error;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod book_service {}

/// Input that fails schema validation.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("header column {column}: {message}")]
    Header { column: usize, message: String },

    #[error("row {row}, column {column}: {message}")]
    Cell { row: usize, column: String, message: String },

    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Model(#[from] mddbayes::Error),
}

impl DataError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        DataError::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Version stamped on every file this tool writes.
pub const SCHEMA_VERSION: u32 = 1;
