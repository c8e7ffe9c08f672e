use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Pipeline stage an error is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Sampling,
    Basis,
    Modes,
    Simulate,
    Reference,
    Compare,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        write!(f, "{}", s.as_str().expect("stage is a string"))
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{stage}: {source}")]
    Core {
        stage: Stage,
        #[source]
        source: rkpm_core::Error,
    },

    #[error("{stage}: {path}: {source}")]
    Io {
        stage: Stage,
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {message}")]
    Format { stage: Stage, message: String },
}

impl HarnessError {
    pub fn io(stage: Stage, path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            stage,
            path: path.display().to_string(),
            source,
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            HarnessError::Parse(_) | HarnessError::Config { .. } => Stage::Config,
            HarnessError::Core { stage, .. } | HarnessError::Io { stage, .. } | HarnessError::Format { stage, .. } => *stage,
        }
    }

    /// Process exit code: 2 for bad configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Config { .. } => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "stage": self.stage(),
            "error": self.to_string(),
        });
        if let HarnessError::Config { field, .. } = self {
            v["field"] = serde_json::Value::String(field.clone());
        }
        v
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError>;
}

impl<T> StageExt<T> for rkpm_core::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Core { stage, source })
    }
}
