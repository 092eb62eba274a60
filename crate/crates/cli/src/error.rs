use std::fmt::Display;

use bss_core::evaluation::EvalError;
use bss_core::mixsim::MixError;
use bss_core::separators::SeparationError;
use bss_core::signal::SignalError;

/// Bad flags, unreadable inputs, invalid scenarios or shape mismatches.
pub const EXIT_INVALID: u8 = 2;
/// The optimizer produced non-finite or singular state.
pub const EXIT_NUMERICAL: u8 = 3;
/// Failures writing outputs.
pub const EXIT_IO: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn invalid(message: impl Display) -> Self {
        Self { code: EXIT_INVALID, message: message.to_string() }
    }

    pub fn numerical(message: impl Display) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.to_string() }
    }

    pub fn io(context: impl Display, err: impl Display) -> Self {
        Self { code: EXIT_IO, message: format!("{context}: {err}") }
    }
}

impl From<SeparationError> for CliError {
    fn from(err: SeparationError) -> Self {
        match err {
            SeparationError::NumericalBreakdown { .. } => CliError::numerical(err),
            _ => CliError::invalid(err),
        }
    }
}

impl From<MixError> for CliError {
    fn from(err: MixError) -> Self {
        CliError::invalid(err)
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::invalid(err)
    }
}

impl From<SignalError> for CliError {
    fn from(err: SignalError) -> Self {
        CliError::invalid(err)
    }
}
