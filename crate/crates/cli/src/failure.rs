//! Errors tagged with the process exit code they map to.

use std::fmt::Display;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STRICT: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, Failure>;

pub fn input_error(msg: impl Display) -> Failure {
    Failure { code: EXIT_INPUT, error: anyhow::anyhow!("{msg}") }
}

/// Non-convergence is our fault, not the input's.
fn code_for(err: &anyhow::Error, default: i32) -> i32 {
    match err.downcast_ref::<pathtomo::Error>() {
        Some(pathtomo::Error::NonConvergence(_)) => EXIT_INTERNAL,
        _ => default,
    }
}

pub trait Context<T> {
    fn input(self, msg: impl Display) -> CliResult<T>;
    fn internal(self, msg: impl Display) -> CliResult<T>;
}

impl<T, E> Context<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn input(self, msg: impl Display) -> CliResult<T> {
        self.map_err(|e| {
            let error: anyhow::Error = e.into();
            Failure { code: code_for(&error, EXIT_INPUT), error: error.context(msg.to_string()) }
        })
    }

    fn internal(self, msg: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure { code: EXIT_INTERNAL, error: e.into().context(msg.to_string()) })
    }
}
