use std::fmt;
use std::path::Path;

use procattn::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Core(Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Schema(_) | Error::Parse { .. } | Error::EmptyLog | Error::Spec(_) | Error::Checkpoint(_) => EXIT_PARSE,
        Error::Config(_) | Error::Split(_) => EXIT_USAGE,
        Error::Model { source, .. } => core_exit_code(source),
        _ => EXIT_NUMERIC,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Parse(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
