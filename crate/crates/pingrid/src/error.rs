use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric failure in {context}: {detail}")]
    Numeric {
        context: &'static str,
        detail: String,
    },

    #[error("matrix is not symmetric (max |M - M'| = {0:.3e})")]
    Asymmetric(f64),

    #[error("graph error: {0}")]
    Graph(String),

    #[error(
        "power flow did not converge after {iterations} iterations \
         (|mismatch| = {mismatch:.3e})"
    )]
    NoConvergence { iterations: usize, mismatch: f64 },

    #[error(
        "power flow diverged at iteration {iteration} \
         (|mismatch| grew to {mismatch:.3e} over 5 consecutive iterations)"
    )]
    Divergence { iteration: usize, mismatch: f64 },

    #[error(
        "singular Jacobian at iteration {iteration} \
         (pivot ratio estimate {pivot_ratio:.3e})"
    )]
    SingularJacobian { iteration: usize, pivot_ratio: f64 },

    #[error("integration failed at t = {t:.6e}: {reason} (|x| = {state_norm:.3e})")]
    Integration {
        t: f64,
        reason: String,
        state_norm: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
