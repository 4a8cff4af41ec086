use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DraError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DraError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid dispersion {0}: must be positive")]
    InvalidDispersion(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("collinearity: column `{column}` is a linear combination of preceding columns")]
    Collinearity { column: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("ROC undefined: {0}")]
    UndefinedRoc(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("timed out waiting for {0}")]
    Timeout(PathBuf),

    #[error("data partner {dp_cd} failed: {reason}")]
    PartnerFailed { dp_cd: u32, reason: String },

    #[error("run aborted by coordinator")]
    Aborted,

    #[error("no convergence after {iterations} iterations (max |delta| = {max_delta:e})")]
    NonConvergence { iterations: usize, max_delta: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl DraError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DraError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        DraError::Data {
            row,
            column: column.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 non-convergence, 3 protocol failure, 4 data error.
    pub fn exit_code(&self) -> i32 {
        match self {
            DraError::NonConvergence { .. } => 2,
            DraError::Protocol(_)
            | DraError::Timeout(_)
            | DraError::PartnerFailed { .. }
            | DraError::Aborted => 3,
            DraError::Data { .. }
            | DraError::Dataset(_)
            | DraError::Config(_)
            | DraError::Csv(_)
            | DraError::DegenerateOutcome(_)
            | DraError::InsufficientData(_) => 4,
            _ => 1,
        }
    }
}
