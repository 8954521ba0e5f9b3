use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pruning pipeline.
///
/// Variants fall into three families which the command-line tool maps onto
/// distinct exit codes: invalid parameters (1), malformed or inconsistent
/// data (2) and numerical failures (3). See [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("negative attention score {value} at index {index}")]
    NegativeScore { index: usize, value: f64 },

    #[error("attention scores sum to {sum}, expected 1 within 1e-6")]
    NotNormalized { sum: f64 },

    #[error("grid {rows}x{cols} does not cover {n} tokens")]
    GridMismatch { rows: usize, cols: usize, n: usize },

    #[error("size mismatch in {context}: expected {expected}, got {got}")]
    SizeMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("no attention mass on visual tokens (all scores are zero)")]
    ZeroMass,

    #[error("empty trace corpus")]
    EmptyCorpus,

    #[error("token count mismatch for sample '{sample_id}': expected {expected}, got {got}")]
    TraceSizeMismatch {
        sample_id: String,
        expected: usize,
        got: usize,
    },

    #[error("mean score {value} at index {index} is not positive; EXP2 fits in log space, use EXP3 instead")]
    NonPositiveMean { index: usize, value: f64 },

    #[error(
        "Gauss-Newton diverged after {iterations} iterations (last stable a={a}, b={b}, c={c})"
    )]
    Divergence {
        iterations: usize,
        a: f64,
        b: f64,
        c: f64,
    },

    #[error("bias profile is not strictly positive: P({index}) = {value}")]
    NonPositiveBias { index: usize, value: f64 },

    #[error("token index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("{path}: line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage, 2 data/schema, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::Divergence { .. } | Error::NonPositiveBias { .. } => 3,
            _ => 2,
        }
    }
}
