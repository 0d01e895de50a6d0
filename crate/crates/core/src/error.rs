use std::path::PathBuf;

/// Failure classes shared by every stage of the pipeline.
///
/// The CLI maps these onto exit codes: configuration problems exit 2, data
/// faults exit 3 and numeric faults exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data fault: {0}")]
    Data(String),

    #[error("numeric fault in `{op}`: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("no convergence after {iterations} iterations (marginal error {marginal_error:e})")]
    Convergence { iterations: usize, marginal_error: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric { op, detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
