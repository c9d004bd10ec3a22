use std::fmt;
use std::path::Path;

pub const EXIT_CONTRACT: u8 = 1;
pub const EXIT_IO: u8 = 2;

/// A command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn contract(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONTRACT,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<duet_core::Error> for Failure {
    fn from(err: duet_core::Error) -> Self {
        let code = if err.is_environmental() { EXIT_IO } else { EXIT_CONTRACT };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
