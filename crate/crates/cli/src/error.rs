use std::fmt;

use dwa::Error;

/// Exit status for bad flags, configs or inputs rejected before work starts.
pub const EXIT_VALIDATION: u8 = 1;
/// Exit status for I/O, decode, checkpoint and numerical failures.
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_)
            | Error::BadSize(_)
            | Error::ShapeIncompatible(_)
            | Error::ImageTooSmall { .. }
            | Error::EmptyDataset
            | Error::BadTransformId(_)
            | Error::TooSmall { .. }
            | Error::ShiftTooLarge { .. }
    )
}

/// Attach the flag or file that caused a library error.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T> Context<T> for dwa::Result<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let message = format!("{what}: {e}");
            if is_validation(&e) {
                CliError::validation(message)
            } else {
                CliError::runtime(message)
            }
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::runtime(format!("{what}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let v: dwa::Result<()> = Err(Error::InvalidConfig("x".into()));
        assert_eq!(v.context("--patch").unwrap_err().code, EXIT_VALIDATION);
        let r: dwa::Result<()> = Err(Error::CorruptPayload("short".into()));
        let e = r.context("m.ckpt").unwrap_err();
        assert_eq!(e.code, EXIT_RUNTIME);
        assert!(e.message.starts_with("m.ckpt: "));
    }
}
