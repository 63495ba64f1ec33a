use std::fmt;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DOMAIN: i32 = 4;
    pub const NUMERICAL: i32 = 5;
}

/// An error carrying the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: exit::CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: exit::IO, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: exit::NUMERICAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<twostage::Error> for CliError {
    fn from(e: twostage::Error) -> Self {
        use twostage::Error::*;
        let code = match &e {
            InvalidInput(_) | Parse { .. } => exit::CONFIG,
            InconsistentRegime(_) => exit::DOMAIN,
            DegenerateInput(_) | SingularDesign(_) | Numerical(_) => exit::NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
