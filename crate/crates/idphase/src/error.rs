use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coordinate ({x}, {y}) outside grid rectangle {width}x{height}")]
    OutOfDomain {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("pairwise table at edge {a:?}-{b:?} is not submodular (margin {margin:.3e})")]
    NonSubmodular {
        a: (usize, usize),
        b: (usize, usize),
        margin: f64,
    },

    #[error("solver did not reach tolerance {tol:.3e}: final residual {final_residual:.3e} after {iterations} iterations")]
    NonConvergence {
        tol: f64,
        final_residual: f64,
        iterations: usize,
        /// Residual after each iteration, for post-mortem inspection.
        history: Vec<f64>,
    },

    #[error("map is not orientation-preserving at pixel ({x}, {y}): jacobian {det:.3e}")]
    JacobianSign { x: usize, y: usize, det: f64 },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
