use thiserror::Error;

/// Errors raised by the solver, baselines, oracle and experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition. `field` names the
    /// offending quantity (`p_tot`, `gains`, `lambda`, ...).
    #[error("invalid {field}: {message}")]
    Domain { field: &'static str, message: String },

    /// An iterative routine failed to converge or hit an impossible state.
    #[error("numerical failure in {context}: {message}")]
    Numerical {
        context: &'static str,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(field: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            field,
            message: message.into(),
        }
    }

    pub fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            message: message.into(),
        }
    }

    /// Name of the offending input field for domain errors.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::Domain { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
