use std::fmt;

use locus_core::LocusError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(LocusError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_VALIDATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Core(e) => write!(f, "[{}] {e}", e.code()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LocusError> for CliError {
    fn from(e: LocusError) -> Self {
        CliError::Core(e)
    }
}
