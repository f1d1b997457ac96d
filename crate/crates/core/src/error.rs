use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad input: violated precondition or out-of-range parameter.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown potential '{0}'")]
    UnknownPotential(String),

    #[error("degenerate critical point: {0}")]
    Degenerate(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    #[error("hierarchy not resolvable at theta = {theta}: {detail}")]
    HierarchyNotResolvable { theta: f64, detail: String },

    #[error("all {0} replicas censored")]
    AllCensored(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::UnknownPotential(_) | Error::Degenerate(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
