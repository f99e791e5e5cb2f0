use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: carma_levy_core::Error,
    },
    #[error("too many failed replications at h = {h}: {failed} of {total}")]
    Attrition { h: f64, failed: usize, total: usize },
    #[error("acceptance gates failed: {}", .0.join("; "))]
    Gate(Vec<String>),
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 numerical failure, 4 gate failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Json(_) => 2,
            HarnessError::Gate(_) => 4,
            HarnessError::Io { .. }
            | HarnessError::Csv(_)
            | HarnessError::Numerical { .. }
            | HarnessError::Attrition { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError>;
}

impl<T> Stage<T> for carma_levy_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Numerical { stage, source })
    }
}
