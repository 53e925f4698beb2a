use std::path::PathBuf;

use hmpc::freqdesign::FreqError;
use hmpc::model::ModelError;
use hmpc::sim::SimError;

/// Exit code for malformed input: bad flags, unreadable or invalid scenarios.
pub const EXIT_INVALID_INPUT: i32 = 2;
/// Exit code when a closed-loop run loses feasibility.
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{name}: {source}")]
    Simulation {
        name: String,
        #[source]
        source: SimError,
    },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("frequency response: {0}")]
    Frequency(#[from] FreqError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } | CliError::Usage(_) | CliError::Model(_) => EXIT_INVALID_INPUT,
            CliError::Simulation {
                source: SimError::StepInfeasible { .. } | SimError::InitialInfeasible(_),
                ..
            } => EXIT_INFEASIBLE,
            _ => EXIT_FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
