use std::io;

use thiserror::Error;

use crate::experiments::ExperimentError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    BudgetExceeded(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// Process exit status: 2 flag error, 3 budget exceeded, 4 statistical
    /// precondition unmet, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::BudgetExceeded(_) => 3,
            CliError::Precondition(_) => 4,
            _ => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        use sandpile_core::ScheduleError;
        match e {
            ExperimentError::BudgetExceeded { .. } | ExperimentError::Schedule(ScheduleError::BudgetExceeded { .. }) => {
                CliError::BudgetExceeded(e.to_string())
            }
            ExperimentError::TooFewIntervals { .. } | ExperimentError::Percolation(_) | ExperimentError::Stats(_) => {
                CliError::Precondition(e.to_string())
            }
            ExperimentError::Measure(_) | ExperimentError::Lattice(_) | ExperimentError::Invalid(_) => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}
