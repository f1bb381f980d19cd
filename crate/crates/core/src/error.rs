use std::path::PathBuf;

/// Errors raised by the sampler, tuners and experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected a parameter vector of length n + k = {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model index {k} is outside the support {{1, ..., {kmax}}}")]
    OutOfSupport { k: usize, kmax: usize },

    #[error("model indices {from} -> {to} are not neighbours")]
    NotNeighbours { from: usize, to: usize },

    #[error("series has zero variance; autocorrelation is undefined")]
    ZeroVariance,

    #[error("series too short: need at least {required} points, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("custom density has no roughness value and Monte Carlo validation is disabled")]
    MissingRoughness,

    #[error("switch rate {rate} is inconsistent with tau = {tau}: r = rate / (1 - tau) must lie in (0, 1)")]
    InconsistentRate { rate: f64, tau: f64 },

    #[error("estimated cost {estimated_seconds:.1}s exceeds budget {budget_seconds:.1}s (pass --override-budget to run anyway)")]
    BudgetExceeded {
        estimated_seconds: f64,
        budget_seconds: f64,
    },

    #[error("numerical guard: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 3,
            Error::Numerical(_) | Error::ZeroVariance => 4,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
