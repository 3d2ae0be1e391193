use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("deformed mesh is degenerate: triangle {triangle} has signed area {area:e}")]
    DegenerateDeformation { triangle: usize, area: f64 },

    #[error("diffusion coefficient {value:e} is not positive at ({x}, {y})")]
    NonPositiveCoefficient { value: f64, x: f64, y: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("covariance is not positive semi-definite: pivot {index} has diagonal {value:e}")]
    NotPsd { index: usize, value: f64 },

    #[error("dense symmetric eigensolve failed for a {0}x{0} matrix")]
    EigFailed(usize),

    #[error("point ({0}, {1}) lies outside the hold-all domain [-2, 2]^2")]
    OutOfHoldAll(f64, f64),

    #[error("fields live on different meshes ({0} vs {1} values)")]
    MeshMismatch(usize, usize),

    #[error("log-log fit needs at least two strictly positive points")]
    NonPositiveData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("malformed {what} file: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numerical failures as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateDeformation { .. }
            | Error::NonPositiveCoefficient { .. }
            | Error::SolverDiverged { .. }
            | Error::NotPsd { .. }
            | Error::EigFailed(_)
            | Error::OutOfHoldAll(..)
            | Error::NonPositiveData => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
