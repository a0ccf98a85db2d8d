use std::fmt;

use dyson_rg::RgError;

pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_MISSING_INPUT: i32 = 66;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self {
            code: EXIT_CONFIG,
            message,
        }
    }

    pub fn missing(message: String) -> Self {
        Self {
            code: EXIT_MISSING_INPUT,
            message,
        }
    }

    pub fn numerical(message: String) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<RgError> for CliError {
    fn from(e: RgError) -> Self {
        let code = match e {
            RgError::SiteOutOfRange { .. }
            | RgError::ParameterOutOfRange { .. }
            | RgError::InvalidInput(_)
            | RgError::ConfigurationBudget { .. } => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
