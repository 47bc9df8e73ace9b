use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} precedes the packet birth time {t0}")]
    OutOfDomain { t: f64, t0: f64 },

    #[error("node degeneracy: {quantity} = {value:e} is below the threshold {threshold:e}")]
    NodeDegeneracy {
        quantity: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("sampler failure: acceptance rate {efficiency:e} after {proposals} proposals ({accepted} accepted)")]
    SamplerFailure {
        efficiency: f64,
        proposals: u64,
        accepted: u64,
    },

    #[error("quadrature grid too coarse: estimated error {estimate:e} exceeds {tolerance:e}")]
    Refinement { estimate: f64, tolerance: f64 },

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for the typed node errors raised near zeros of the wavefunction.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::NodeDegeneracy { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
