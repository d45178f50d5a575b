use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("total mass {found} differs from expected {expected}")]
    MassMismatch { expected: f64, found: f64 },

    #[error("density {value} at cell {cell} violates 0 <= rho <= 1")]
    ConstraintViolation { cell: usize, value: f64 },

    #[error("quantile samples decrease at index {index}")]
    Monotonicity { index: usize },

    #[error("measures are unbalanced: {left} vs {right}")]
    Unbalanced { left: f64, right: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failed: {reason} (objective gap {gap:e})")]
    SolverFailure { reason: String, gap: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("regime ended: {0}")]
    RegimeEnd(String),

    #[error("singular ODE: {0}")]
    Singularity(String),

    #[error("no sign change in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Wraps an error with the index of the flow step that produced it.
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
