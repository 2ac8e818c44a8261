use std::path::PathBuf;

/// Errors produced by the solvers, the spectral pipeline and the sweep front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The linearized system has a growing mode, so no stationary spectrum exists.
    #[error("unstable fluctuation system (max growth rate {max_growth:.3e})")]
    Unstable { max_growth: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
