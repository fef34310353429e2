use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifold(usize, usize, usize),
    #[error("backward called without a recorded forward pass")]
    BackwardWithoutForward,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("optimization diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Validation failures map to exit code 1, divergence to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("json: {e}"))
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Format(format!("binary container: {e}"))
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format(format!("config: {e}"))
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Format(format!("config: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
