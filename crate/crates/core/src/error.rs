use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum LodError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factorization failed at row {row} (pivot {pivot:e})")]
    Factorization { row: usize, pivot: f64 },

    #[error("patch {patch}: Schur complement is rank deficient (min pivot ratio {ratio:e})")]
    RankDeficient { patch: usize, ratio: f64 },

    #[error("patch {patch}: empty active node set")]
    DegeneratePatch { patch: usize },

    #[error("patch {patch}: {source}")]
    Patch {
        patch: usize,
        #[source]
        source: Box<LodError>,
    },

    #[error(
        "eigensolver did not converge after {iterations} iterations (worst residual {worst:e})"
    )]
    Convergence {
        iterations: usize,
        worst: f64,
        residuals: Vec<f64>,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LodError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LodError::InvalidArgument(msg.into()))
}
