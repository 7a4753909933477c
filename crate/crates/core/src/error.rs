use std::io;

use thiserror::Error;

use crate::model::DenseVector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The solver hit a non-finite objective. Carries the last iterate whose
    /// objective was finite.
    #[error("numeric failure: {msg}")]
    Numeric {
        msg: String,
        last_finite: Option<DenseVector>,
    },

    #[error("round {round} failed: no report from machines {missing:?}")]
    RoundFailure { round: u32, missing: Vec<u16> },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn dim(expected: usize, got: usize) -> Self {
        Error::Dimension(format!("expected length {expected}, got {got}"))
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Dimension(_) | Error::Data(_) | Error::Parse { .. } | Error::UndefinedMetric(_) => 3,
            Error::Numeric { .. } => 4,
            Error::RoundFailure { .. } | Error::Transport(_) => 5,
            Error::Io(e) => match e.kind() {
                io::ErrorKind::ConnectionRefused
                | io::ErrorKind::ConnectionReset
                | io::ErrorKind::ConnectionAborted
                | io::ErrorKind::TimedOut
                | io::ErrorKind::UnexpectedEof
                | io::ErrorKind::BrokenPipe => 5,
                _ => 3,
            },
        }
    }
}
