use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate templates: {0}")]
    DegenerateTemplates(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("circulant spectrum is not positive: eigenvalue {index} = {value:e}")]
    Spectrum { index: usize, value: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("template matrix is rank deficient (rank {rank} < {expected})")]
    Rank { rank: usize, expected: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("approximation breaks down: {0}")]
    ApproximationBreakdown(String),

    #[error("precision {target:e} unattainable within budget (achieved {achieved:e})")]
    Budget { target: f64, achieved: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
