use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A party or record broke the protocol contract.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// Scenario configuration failed to parse or validate.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Frame(#[from] crate::netlink::FrameError),

    #[error("network failure: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) => 2,
            Error::Protocol(_) => 3,
            Error::Frame(_) | Error::Network(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
