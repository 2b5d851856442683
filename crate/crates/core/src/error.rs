use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfgError>;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("index {index:?} out of range for {nodes} nodes per axis")]
    IndexOutOfRange { index: Vec<isize>, nodes: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density {rho} outside the domain of the {kind} Hamiltonian")]
    InvalidDensity { rho: f64, kind: &'static str },

    #[error("operation requires {expected} problem, got {got}")]
    WrongProblemKind { expected: &'static str, got: &'static str },

    #[error("operation requires periodic boundary")]
    NotPeriodic,

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("policy iteration {iteration}: {source}")]
    PolicyIteration {
        iteration: usize,
        #[source]
        source: Box<MfgError>,
    },

    #[error("fixed point did not converge after {iterations} sweeps (last change {change:e})")]
    FixedPoint { iterations: usize, change: f64 },

    #[error("non-finite value in {context} at batch index {index}")]
    NonFinite { context: String, index: usize },

    #[error("training aborted in {stage} stage at iteration {iteration}: {source}")]
    Training {
        stage: &'static str,
        iteration: usize,
        #[source]
        source: Box<MfgError>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
