use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a model function.
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Configuration file parse failure tied to a specific key.
    #[error("invalid key `{key}`: {msg}")]
    Key { key: String, msg: String },

    /// A field violates a state invariant (for instance R <= 0 somewhere).
    #[error("state error: {0}")]
    State(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step} failed at t = {t:.6e}: {reason}")]
    StepFailure { step: usize, t: f64, reason: String },

    #[error("blow-up at step {step}: min R = {min_r:.6e} after {halvings} dt halvings")]
    BlowUp {
        step: usize,
        min_r: f64,
        halvings: usize,
    },

    /// An iterate left the interval where f1' < 0.
    #[error("radius left the stable range: max R/R0 = {max_rhat:.6} reached R_crit/R0 = {rhat_crit:.6}")]
    BeyondH1 { max_rhat: f64, rhat_crit: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Key { .. })
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            3
        }
    }
}
