use std::fmt;

/// Command failure, classified for the process exit status.
#[derive(Debug)]
pub enum CliError {
    Argument(String),
    Format(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Argument(_) => 2,
            CliError::Format(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(what: impl fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{what}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Argument(m) => write!(f, "argument error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<mimic_core::Error> for CliError {
    fn from(e: mimic_core::Error) -> Self {
        use mimic_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Argument(_) => CliError::Argument(msg),
            E::Format(_) | E::Version { .. } | E::Integrity(_) | E::Dimension(_) => CliError::Format(msg),
            E::Io { .. } => CliError::Io(msg),
            E::State(_) => CliError::Internal(msg),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
