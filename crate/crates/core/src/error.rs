use std::path::PathBuf;

use thiserror::Error;

use crate::sim::AbortedRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("derived constant c{index} = {value} is not finite and strictly positive")]
    InvalidConstant { index: usize, value: f64 },

    /// The plant was evaluated outside its physical domain. Integrators treat
    /// this as a step rejection.
    #[error("plant domain violation: cathode radicand {radicand} Pa, manifold pressure {p_sm} Pa")]
    PlantDomain { radicand: f64, p_sm: f64 },

    #[error("estimator window invalid: {0}")]
    Window(String),

    #[error("time {t} s outside profile range [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("stack current {xi} A is at or below the guard {xi_min} A")]
    CurrentGuard { xi: f64, xi_min: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("run `{run}`, field `{field}`: {message}")]
    Validation {
        run: String,
        field: String,
        message: String,
    },

    #[error("trim did not converge: {0}")]
    Trim(String),

    #[error("run aborted at t = {} s: {}", .0.time, .0.cause)]
    Aborted(Box<AbortedRun>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
