use std::fmt;

use rtmix::crossval::CrossValError;
use rtmix::data::DataError;
use rtmix::model::ModelError;
use rtmix::sampler::SamplerError;
use rtmix::simulate::SimulateError;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values.
    Usage(String),
    /// Unreadable or invalid data, or a fold plan the data cannot support.
    Input(String),
    /// Sampler or likelihood failure.
    Numerical(String),
    /// Failure writing outputs.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Error class of a sampler failure.
fn sampler_class(e: &SamplerError) -> fn(String) -> CliError {
    match e {
        SamplerError::InvalidConfig(_) => CliError::Usage,
        SamplerError::EmptyDataset => CliError::Input,
        SamplerError::Io(_) => CliError::Io,
        _ => CliError::Numerical,
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        sampler_class(&e)(e.to_string())
    }
}

impl From<CrossValError> for CliError {
    fn from(e: CrossValError) -> Self {
        let mut inner = &e;
        while let CrossValError::Fold { source, .. } = inner {
            inner = source;
        }
        let class = match inner {
            CrossValError::PlanMismatch { .. } | CrossValError::InvalidOrder(_) | CrossValError::Alignment(_) => {
                CliError::Input
            }
            CrossValError::Sampler(s) => sampler_class(s),
            _ => CliError::Numerical,
        };
        class(e.to_string())
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::InvalidTruth { .. } | SimulateError::InvalidLevel(_) | SimulateError::NoReplicates => {
                CliError::Usage(e.to_string())
            }
            SimulateError::Alignment(_) | SimulateError::Data(_) => CliError::Input(e.to_string()),
            SimulateError::Model(_) => CliError::Numerical(e.to_string()),
            SimulateError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}
