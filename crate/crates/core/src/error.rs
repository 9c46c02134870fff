use thiserror::Error;

/// Errors raised by the library.
///
/// Almost every failure here is a caller handing in arguments outside an
/// operation's domain; those all map to [`Error::Contract`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("size guard exceeded: {what} = {value} (limit {limit})")]
    Guard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn guard(what: &'static str, value: usize, limit: usize) -> Result<()> {
    if value > limit {
        Err(Error::Guard { what, value, limit })
    } else {
        Ok(())
    }
}
