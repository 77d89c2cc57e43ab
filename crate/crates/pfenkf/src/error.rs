//! Crate-wide error type and result alias.

use std::path::PathBuf;

/// Everything that can go wrong across meshing, solving, and filtering.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("sensor outside mesh at {0:?}")]
    SensorOutsideMesh(Vec<f64>),

    #[error("assembly produced a non-finite value in element {element}")]
    NonFiniteAssembly { element: usize },

    #[error(
        "newton did not converge after {iterations} iterations \
         (last residual {residual:.3e}, history {history:?})"
    )]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("matrix not positive definite (smallest diagonal pivot {pivot:.3e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("{failed} of {total} ensemble members failed (more than 10%)")]
    TooManyMemberFailures { failed: usize, total: usize },

    #[error("regularization stage `{stage}` failed: {source}")]
    Regularization {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration did not converge after {evaluations} objective evaluations")]
    CalibrationDiverged { evaluations: usize },

    #[error("validation check `{name}` failed: {detail}")]
    CheckFailed { name: String, detail: String },

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a path to a bare `std::io::Error`.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for solver failures, 1 for any failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format { .. } => 2,
            Error::NewtonDiverged { .. }
            | Error::LinearSolve(_)
            | Error::NotPositiveDefinite { .. }
            | Error::TooManyMemberFailures { .. }
            | Error::NonFiniteAssembly { .. }
            | Error::Regularization { .. }
            | Error::CalibrationDiverged { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
