//! CLI error classification onto the stable exit-code contract.

use coopsense::cpm::DecodeError;
use thiserror::Error;

/// Exit code 2 for input problems, 3 for codec problems.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("codec: {0}")]
    Codec(DecodeError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Codec(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        CliError::Codec(e)
    }
}

impl From<coopsense::cpm::CpmError> for CliError {
    fn from(e: coopsense::cpm::CpmError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<coopsense::geometry::GeometryError> for CliError {
    fn from(e: coopsense::geometry::GeometryError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<coopsense::sim::SimError> for CliError {
    fn from(e: coopsense::sim::SimError) -> Self {
        match e {
            coopsense::sim::SimError::Decode(d) => CliError::Codec(d),
            other => CliError::Input(other.to_string()),
        }
    }
}
