use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate patient_id `{0}` in structured file")]
    DuplicatePatient(String),

    #[error("column `{0}` has no non-missing values")]
    EmptyColumn(String),

    #[error("column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric { column: String, value: String },

    #[error("row has {got} fields, schema expects {expected}")]
    RowWidth { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("labels contain a single class{}", context_suffix(.0))]
    SingleClass(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("modality `{modality}`: {source}")]
    Modality {
        modality: String,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold}, method `{method}`: {source}")]
    Fold {
        fold: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    Model(String),
}

fn context_suffix(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(" ({ctx})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_modality(self, modality: &str) -> Self {
        Error::Modality {
            modality: modality.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
