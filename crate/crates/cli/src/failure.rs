use std::fmt::Display;
use std::path::Path;

use pulse_core::Error;

/// A command failure mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable configuration, missing input paths: exit 2.
    Usage(String),
    /// Anything that goes wrong once the pipeline runs: exit 1.
    Pipeline(String),
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Self::Usage(msg.to_string())
    }

    pub fn pipeline(msg: impl Display) -> Self {
        Self::Pipeline(msg.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Pipeline(_) => 1,
        }
    }

    /// Single-line diagnostic.
    pub fn message(&self) -> String {
        let m = match self {
            Self::Usage(m) => format!("usage error: {m}"),
            Self::Pipeline(m) => format!("error: {m}"),
        };
        m.replace('\n', " ")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Self::Usage(e.to_string()),
            other => Self::Pipeline(other.to_string()),
        }
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::pipeline(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::pipeline(format!("{}: {e}", path.display())))
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, Failure> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Failure::pipeline(format!("{}: {e}", path.display())))
}
