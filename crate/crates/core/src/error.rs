use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid problem, grid, or experiment setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// Every violation found in a configuration document.
    #[error("invalid configuration:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    Invalid(Vec<String>),

    /// A coefficient returned a non-finite value.
    #[error("non-finite coefficient evaluation at t = {t}, x = {x:?}")]
    Evaluation { t: f64, x: Vec<f64> },

    /// A one-step map produced a non-finite state.
    #[error("blow-up at step {step} (t = {t}, |x| = {norm})")]
    BlowUp { step: usize, t: f64, norm: f64 },

    /// A sampling-based estimator had nothing usable to work with.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Least-squares slope fit could not be formed.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// Too many Monte Carlo samples failed.
    #[error("experiment failed: {failures} of {samples} samples blew up")]
    Experiment { failures: usize, samples: usize },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
