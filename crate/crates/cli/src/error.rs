use moduli_traces_core::Error as CoreError;
use serde_json::json;

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Store(#[from] StoreError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} checks failed")]
    VerificationFailed { failed: usize, total: usize },
}

impl AppError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 verification failure, 2 invalid input, 3 precision failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Invalid(_) => 2,
            AppError::VerificationFailed { .. } => 1,
            AppError::Store(_) | AppError::Io { .. } => 4,
            AppError::Core(e) => match e {
                CoreError::PrecisionFailure { .. } | CoreError::Float(_) => 3,
                CoreError::Identification(_) => 1,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "verification_failure",
            2 => "invalid_input",
            3 => "precision_failure",
            _ => "io_error",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}
