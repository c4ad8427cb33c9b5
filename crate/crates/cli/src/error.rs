use std::fmt;

use dfdetect_core::{CheckpointError, DataError, TrainError};

pub const EXIT_GRADCHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_CHECKPOINT: u8 = 5;

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(EXIT_DATA, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::new(EXIT_CHECKPOINT, format!("checkpoint ({}): {e}", e.code()))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => Self::new(EXIT_NUMERIC, e.to_string()),
            TrainError::Data(d) => d.into(),
            _ => Self::data(e.to_string()),
        }
    }
}
