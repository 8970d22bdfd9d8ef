use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: cannot parse {value:?} at row {row}, column {col} ({name})")]
    Parse {
        path: PathBuf,
        /// 1-based data row, not counting the header.
        row: usize,
        /// 1-based column.
        col: usize,
        name: String,
        value: String,
    },
    #[error("row count mismatch: {0}")]
    RowCountMismatch(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Input {
        context: String,
        source: sardir::Error,
    },
    #[error(transparent)]
    Model(#[from] sardir::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(context: impl Into<String>, source: sardir::Error) -> Self {
        Self::Input {
            context: context.into(),
            source,
        }
    }

    /// 2 for bad input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Model(e) if is_numeric(e) => 3,
            Self::Write { .. } => 1,
            _ => 2,
        }
    }
}

fn is_numeric(e: &sardir::Error) -> bool {
    use sardir::Error::*;
    matches!(
        e,
        DomainError { .. }
            | SingularLag { .. }
            | NonFiniteLinearPredictor(_)
            | Overflow { .. }
            | NonPositiveProbability { .. }
            | NonFiniteObjective { .. }
            | LineSearchFailure { .. }
            | SingularInformation
    )
}
