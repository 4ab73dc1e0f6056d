use thiserror::Error;

use crate::lowrank::LowRankFactors;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("singular operator: pivot {pivot:e} at row {row}")]
    SingularOperator { row: usize, pivot: f64 },

    #[error("{0} failed to converge")]
    ConvergenceFailure(&'static str),

    #[error("Sylvester residual check failed (relative residual {relative_residual:e}); spectra of A1 and -A2 overlap")]
    SpectralOverlap { relative_residual: f64 },

    #[error("Krylov basis saturated at dimension {dim}")]
    BasisSaturated { dim: usize },

    #[error("extended Krylov iteration did not reach tolerance {tolerance:e} after {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        best: Box<LowRankFactors>,
    },

    #[error("stage {stage} requested but only {available} earlier stage increments are stored")]
    MissingStage { stage: usize, available: usize },

    #[error("non-positive diffusion coefficient D[{alpha}][{beta}] = {value:e}")]
    NonPositiveDiffusion {
        alpha: usize,
        beta: usize,
        value: f64,
    },

    #[error("Newton iteration diverged after {iterations} iterations (residual history {history:?})")]
    NewtonDivergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("invalid Butcher table: {0}")]
    InvalidTable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
