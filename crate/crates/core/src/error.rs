use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input parameters; `path` names the offending field when known.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numerical error at step {step}: {message}")]
    Numerical { step: u64, message: String },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("fit error: {message}")]
    Fit { message: String, trace: Vec<String> },

    #[error("low contrast: C = {contrast:.3e} below 3x residual {residual:.3e}")]
    LowContrast { contrast: f64, residual: f64 },

    /// Carries the sampled (Ω, P) curve so the caller can pick a better bracket.
    #[error("calibration error: {message}")]
    Calibration { message: String, samples: Vec<(f64, f64)> },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("truncation error: boundary population {population:.3e} exceeds {limit:.1e}")]
    Truncation { population: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub fn numerical(step: u64, message: impl Into<String>) -> Self {
        Error::Numerical { step, message: message.into() }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::OutOfRange(_) | Error::Io(_) => 2,
            Error::Numerical { .. } | Error::Truncation { .. } => 3,
            Error::Measurement(_)
            | Error::Fit { .. }
            | Error::LowContrast { .. }
            | Error::Calibration { .. } => 4,
        }
    }
}
