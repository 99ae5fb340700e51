use std::fmt;

use crate::lock::LockError;

/// Process exit codes. These are part of the command-line contract.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const PROVIDER: u8 = 3;
    pub const LOCKED: u8 = 4;
    pub const OUTPUT_SAFETY: u8 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: exit::INPUT, message: message.into() }
    }
    pub fn provider(message: impl Into<String>) -> Self {
        Self { code: exit::PROVIDER, message: message.into() }
    }
    pub fn output(message: impl Into<String>) -> Self {
        Self { code: exit::OUTPUT_SAFETY, message: message.into() }
    }
    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: exit::INTERNAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<LockError> for CliError {
    fn from(e: LockError) -> Self {
        match e {
            LockError::Held(p) => Self { code: exit::LOCKED, message: format!("store is locked by another process ({})", p.display()) },
            LockError::Io(m) => Self::internal(m),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
