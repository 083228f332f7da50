use rdcp::perturbation::PerturbationError;
use rdcp::spectral::SpectralError;
use rdcp::{DistError, LambdaError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Numerical(String),
    /// Output was written but a fatal check failed.
    #[error("{0}")]
    CheckFailed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 usage, 2 degenerate input, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Degenerate(_) => 2,
            CliError::Numerical(_) | CliError::CheckFailed(_) => 3,
        }
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        match e {
            DistError::DegenerateRegular => CliError::Degenerate(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LambdaError> for CliError {
    fn from(e: LambdaError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::DegenerateRegular => {
                CliError::Degenerate("degenerate law: the 2-regular process has t_c = 1 and t_hat_c = infinity".into())
            }
            SpectralError::InvalidArgument(m) => CliError::Usage(m),
            SpectralError::Dist(d) => d.into(),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Usage(m),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PerturbationError> for CliError {
    fn from(e: PerturbationError) -> Self {
        match e {
            PerturbationError::InvalidDelta(_) | PerturbationError::InvalidArgument(_) => {
                CliError::Usage(e.to_string())
            }
            PerturbationError::Dist(d) => d.into(),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}
