//! Process exit codes and error classification.

use std::path::Path;

pub const SUCCESS: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const PARTIAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult<T> = Result<T, Failure>;

pub fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: USAGE,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn data(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: DATA,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub trait OrData<T> {
    /// Classifies an error as bad input data, with context.
    fn or_data(self, context: impl std::fmt::Display) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrData<T> for Result<T, E> {
    fn or_data(self, context: impl std::fmt::Display) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code: DATA,
            error: e.into().context(context.to_string()),
        })
    }
}

/// A path named on the command line must exist.
pub fn existing(path: &Path) -> CmdResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}
