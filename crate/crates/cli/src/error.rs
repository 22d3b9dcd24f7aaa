use std::fmt;
use std::path::PathBuf;

use safelogrank::Error;

/// Exit status when the test rejects the null.
pub const EXIT_REJECT: i32 = 10;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
    Input(PathBuf, std::io::Error),
    Io(std::io::Error),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Input(..) => EXIT_NO_INPUT,
            CliError::Io(_) => EXIT_IO,
            CliError::Lib(e) => match e {
                Error::InvalidHazardRatio(_)
                | Error::InvalidAlpha(_)
                | Error::InvalidBoundary(_)
                | Error::InvalidDesign(_)
                | Error::InvalidPrior(_)
                | Error::TooFewSamples { .. } => EXIT_USAGE,
                Error::Parse { .. }
                | Error::Data(_)
                | Error::EmptyGroupEvent { .. }
                | Error::InvalidBatch(_) => EXIT_DATA,
                _ => EXIT_SOFTWARE,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            CliError::Io(e) => write!(f, "output error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
