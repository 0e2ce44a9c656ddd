use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("numerics: {0}")]
    Numerics(String),

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("hessian is not positive definite: {0}")]
    InvalidHessian(String),

    #[error("not at a MAP estimate: gradient norm {grad_norm:e} exceeds {tolerance:e}")]
    NotAtMap { grad_norm: f64, tolerance: f64 },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("trajectories cannot be compared: {0}")]
    InvalidComparison(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(point: &[f64], reason: impl Into<String>) -> Self {
        Error::Domain {
            point: point.to_vec(),
            reason: reason.into(),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
