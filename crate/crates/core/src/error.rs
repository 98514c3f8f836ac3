use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("field has {got} values but the grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("support function is not positive at grid point {index} {point:?}: phi = {value}")]
    NonPositiveSupport { index: usize, point: Vec<f64>, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} eigenvalues from a matrix of size {size}")]
    TooManyEigenvalues { requested: usize, size: usize },

    #[error("E0 = {e0} appears in both spectra (h0 level {h0_level}, h1 level {h1_level})")]
    LevelInBothSpectra { e0: f64, h0_level: f64, h1_level: f64 },

    #[error("integration path leaves the grid at step {step}")]
    PathLeavesGrid { step: usize },

    #[error("inconsistent Moutard pair: the two constructions differ by {discrepancy:e} (tolerance {tolerance:e})")]
    InconsistentPair { discrepancy: f64, tolerance: f64 },

    #[error("vector field is not normalized: (v, v) = {norm}")]
    NotNormalized { norm: f64 },

    #[error("relation {relation} violated at N={level}: residual {residual:e} exceeds {threshold:e}")]
    AlgebraViolation {
        relation: String,
        level: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("dual superhamiltonian corner block mismatch: {block} residual {residual:e}")]
    DualMismatch { block: String, residual: f64 },

    #[error("support function does not declare its asymptotic exponents")]
    UndeclaredAsymptotics,

    #[error("solver failed in channel {channel}: {reason}")]
    SolverFailure { channel: String, reason: String },

    #[error("{what} is not normalizable: norm grows from {inner:e} to {outer:e} when the domain doubles")]
    NonNormalizable { what: String, inner: f64, outer: f64 },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than by a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidParameter(_)
                | Error::AxisOutOfRange { .. }
                | Error::Unsupported(_)
                | Error::UndeclaredAsymptotics
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
