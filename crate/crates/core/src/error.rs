use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the oscillator, network, training and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sampling step {dt} exceeds the Nyquist limit {dt_max} for a target frequency of {omega_target} rad/unit time (f_R = 1/dt_max = 2 f_target)")]
    Nyquist {
        dt: f64,
        dt_max: f64,
        omega_target: f64,
    },

    #[error("model file {field}: {reason}")]
    Parse { field: String, reason: String },

    #[error("incompatible model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("singular residual Jacobian (det = {det:e}) at step {step}")]
    SingularJacobian { step: usize, det: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
