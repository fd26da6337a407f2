use std::path::PathBuf;

use thiserror::Error;

use crate::lexer::LexError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("provider transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },

    #[error("mock provider has no scripted output for {template} (key {key})")]
    MockMiss { template: String, key: String },

    #[error("provider returned an empty completion for key {key}")]
    EmptyResponse { key: String },

    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(&'static str),

    #[error("executor: {0}")]
    Executor(String),

    #[error("simulated executor has no entry for solution {solution:?} x test {test:?}")]
    SimulatedMiss { solution: String, test: String },

    #[error("harness protocol: {0}")]
    Protocol(String),

    #[error("no candidates survived")]
    NoCandidates,

    #[error("unparseable source: {0}")]
    Lex(#[from] LexError),

    #[error("{path}:{line}: {message}")]
    TaskRecord { path: PathBuf, line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
