use std::process::ExitCode;

use segprune::Error;

/// Failure of a subcommand, split by exit code: usage errors exit 2, data and
/// runtime errors exit 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<Error> for CliError {
    /// Parameter problems are usage errors; anything about the data is not.
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::BudgetExceedsTokens { .. }
            | Error::ZeroBudget
            | Error::SegmentsExceedTokens { .. }
            | Error::ZeroSegments
            | Error::MissingKeys
            | Error::MissingEmbeddings
            | Error::InfeasibleSpec(_)
            | Error::NegativeDuration(_)
            | Error::TooFewReps(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
