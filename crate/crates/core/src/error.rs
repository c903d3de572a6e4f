use thiserror::Error;

use crate::domain::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input: datasets, configs, profiles, artifacts.
    Input,
    /// The input was well formed but the model could not be fitted or sampled.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("covariate `{covariate}`: {message}")]
    Profile { covariate: String, message: String },

    #[error("row {row}, column `{column}`: {message}")]
    Csv {
        row: u64,
        column: String,
        message: String,
    },

    #[error("malformed document: {0}")]
    Format(String),

    #[error("unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("study `{study}`: {message}")]
    Study { study: String, message: String },

    #[error("study `{study}`: {observations} observations for {columns} design columns (need more observations than columns)")]
    InsufficientObservations {
        study: String,
        observations: usize,
        columns: usize,
    },

    #[error("study `{study}`: rank-deficient design, dependent columns: {}", .columns.join(", "))]
    RankDeficient { study: String, columns: Vec<String> },

    #[error("{} studies failed to fit:\n{}", .0.len(), join_errors(.0))]
    StudyFits(Vec<Error>),

    #[error("parameter not estimable: {parameter} ({reason})")]
    Estimability { parameter: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unknown treatment `{0}`")]
    UnknownTreatment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_errors(errors: &[Error]) -> String {
    errors
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RankDeficient { .. }
            | Error::InsufficientObservations { .. }
            | Error::Estimability { .. }
            | Error::Numeric(_) => ErrorClass::Numeric,
            Error::StudyFits(errors) => {
                if errors.iter().all(|e| e.class() == ErrorClass::Numeric) {
                    ErrorClass::Numeric
                } else {
                    ErrorClass::Input
                }
            }
            _ => ErrorClass::Input,
        }
    }
}
