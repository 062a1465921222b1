use crate::config::ConfigError;
use laplace_cert::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid problem or options: {0}")]
    Invalid(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 config, 3 assumption violation, 4 numerical or output failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) | CliError::Csv(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parameter(_) | CoreError::UnknownProblem(_) | CoreError::Dimension { .. } | CoreError::Unsupported(_) => {
                CliError::Invalid(e.to_string())
            }
            CoreError::AssumptionViolated(_) | CoreError::Indefinite { .. } => CliError::Assumption(e.to_string()),
            CoreError::Evaluation { .. } | CoreError::NonConvergence { .. } | CoreError::Quadrature { .. } | CoreError::Contract(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}
