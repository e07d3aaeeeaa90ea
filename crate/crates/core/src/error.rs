use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically rank deficient (condition number estimate {condition:.3e} exceeds {limit:.1e})")]
    RankDeficient { condition: f64, limit: f64 },

    #[error("matrix contains non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is identically zero: no leading direction")]
    ZeroMatrix,

    #[error(
        "power iteration did not converge after {iterations} iterations \
         (top eigenvalue estimate {estimate:.6e}, relative change {last_change:.3e}, \
         observed contraction ratio {contraction:.6})"
    )]
    NonConvergence {
        iterations: usize,
        estimate: f64,
        last_change: f64,
        contraction: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix file: {0}")]
    MatrixFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
