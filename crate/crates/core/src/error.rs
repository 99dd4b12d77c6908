use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("state carries no intermediate (IBR) profile; only FLBR and OMD produce one")]
    MissingIntermediate,

    #[error("estimator hit t_max = {steps} without meeting the criterion; solution discarded")]
    Discarded { steps: u64 },

    #[error("support enumeration supports at most 5x5 games, got {rows}x{cols}")]
    Size { rows: usize, cols: usize },

    #[error("no support pair produced an equilibrium at tolerance {tol:e}")]
    NoSolution { tol: f64 },

    #[error("in-support probability {prob:e} at index {index} is below the support threshold {tol:e}")]
    IllConditionedSupport { index: usize, prob: f64, tol: f64 },

    #[error("QR iteration did not converge after {sweeps} sweeps ({found} of {total} eigenvalues found)")]
    Convergence {
        sweeps: usize,
        found: usize,
        total: usize,
        /// Moduli of the eigenvalues that did converge. Unreliable as a spectrum.
        partial: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
