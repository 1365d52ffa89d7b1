use thiserror::Error;

/// Errors raised by mesh construction, model evaluation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("edge {edge:?} is not incident to cell {cell}")]
    NotIncident { cell: usize, edge: crate::mesh::EdgeId },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("negative volume fraction {value} (species {species}, cell {cell})")]
    NegativeFraction {
        species: usize,
        cell: usize,
        value: f64,
    },

    #[error("non-positive volume fraction {value} (species {species}, cell {cell}); logarithm undefined")]
    NonPositiveFraction {
        species: usize,
        cell: usize,
        value: f64,
    },

    #[error("value {value} outside {range} in cell {cell}")]
    OutOfRange {
        cell: usize,
        value: f64,
        range: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("NaN input")]
    NaN,

    #[error("newton solver failed: {0}")]
    Newton(#[from] NewtonFailure),

    #[error("time stepping aborted at t = {time}: dt {dt} fell below dt_min (last residual {last_residual:e})")]
    Abort {
        time: f64,
        dt: f64,
        last_residual: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

/// Why a Newton solve did not produce an accepted iterate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewtonFailure {
    #[error("no convergence after {iterations} iterations (last update {last_update:e}, residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        last_update: f64,
        residual: f64,
    },
    #[error("singular linearization (residual {residual:e})")]
    Singular { residual: f64 },
    #[error("iterate left the admissible box: value {value} (residual {residual:e})")]
    Diverged { value: f64, residual: f64 },
}

impl NewtonFailure {
    /// Residual ∞-norm at the moment the solve gave up.
    pub fn residual(&self) -> f64 {
        match *self {
            NewtonFailure::MaxIterations { residual, .. }
            | NewtonFailure::Singular { residual }
            | NewtonFailure::Diverged { residual, .. } => residual,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
