use std::path::PathBuf;

use reshuffle::analysis::AnalysisError;
use reshuffle::data::{DataError, ParseError};
use reshuffle::optim::OptimError;
use reshuffle::ProblemError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Libsvm {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("invalid seed range `{0}`, expected a..b with a < b")]
    SeedRange(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
