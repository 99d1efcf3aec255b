use thiserror::Error;

use crate::gemm::ShardAxis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{axis} dimension {dim} is not divisible by shard degree {degree}")]
    Divisibility {
        axis: ShardAxis,
        dim: u64,
        degree: u64,
    },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("calibration table `{table}`: {reason}")]
    Calibration { table: String, reason: String },

    #[error("lookup outside domain: x = {0} (must be > 0)")]
    Domain(f64),

    #[error("schedule {0} is not supported by this planner entry point")]
    UnsupportedSchedule(String),

    #[error("deadlock: tasks {0:?} form a dependency cycle or wait on missing tasks")]
    Deadlock(Vec<usize>),

    #[error("results belong to different scenarios: `{0}` vs `{1}`")]
    ScenarioMismatch(String, String),

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn calibration(table: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Calibration {
            table: table.into(),
            reason: reason.into(),
        }
    }
}
