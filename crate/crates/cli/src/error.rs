use lidkit::data::DataError;
use lidkit::ensemble::EnsembleError;
use lidkit::eval::EvalError;
use lidkit::label::RegistryError;
use lidkit::linear::{ModelIoError, TrainError};
use lidkit::stage2::Stage2Error;

/// Command failure, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable or invalid input data and model files (exit 2).
    Data(String),
    /// The remote stage-2 service misbehaved (exit 3).
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Remote(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Remote(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        CliError::Usage(format!("registry: {e}"))
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<Stage2Error> for CliError {
    fn from(e: Stage2Error) -> Self {
        CliError::Remote(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Stage2 { .. } => CliError::Remote(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Classifier(e) => e.into(),
            EvalError::Stage2(e) => e.into(),
            EvalError::Train(e) => e.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
