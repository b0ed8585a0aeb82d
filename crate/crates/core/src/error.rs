use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument had the wrong length or shape.
    #[error("dimension mismatch for `{arg}`: expected {expected}, got {got}")]
    Dimension {
        arg: &'static str,
        expected: usize,
        got: usize,
    },

    /// A precondition on an argument value was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A function produced a non-finite value where a finite one was required.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    /// Invalid or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator produced a non-finite state.
    #[error("numerical blow-up at t = {t}: {what}")]
    BlowUp { t: f64, what: String },

    /// A matrix that had to be inverted was singular.
    #[error("singular matrix: {0}")]
    Singular(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn check_len(arg: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { arg, expected, got })
    }
}
