use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("metric left the Kaehler cone: minimum eigenvalue {min_eigenvalue:e} at point {point} (threshold {threshold:e})")]
    PositivityLost {
        point: usize,
        min_eigenvalue: f64,
        threshold: f64,
    },
    #[error("field shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cohomology mismatch: {0}")]
    CohomologyMismatch(String),
    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("ball radius {radius} exceeds the embedding bound {bound}")]
    BallTooLarge { radius: f64, bound: f64 },
    #[error("at least {needed} samples are required, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid monitor configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("no run found in {0}")]
    MissingRun(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },
}

impl IoError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("audits of the real system need the form-level formulation")]
    NotFormLevel,
    #[error("snapshots are not uniformly spaced: {0:?}")]
    NonUniform([f64; 3]),
    #[error("snapshots disagree in formulation or size")]
    Mismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
