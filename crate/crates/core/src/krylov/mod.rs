//! Adaptive-rank solution of `A₁F + FA₂ᵀ = B` for low-rank `B` by extended
//! Krylov bases, Galerkin reduction and a residual test that never forms
//! full-size matrices.

mod basis;
mod galerkin;
mod stages;

pub use basis::{grow_basis, ExtendedKrylovBasis};
pub use galerkin::{
    assemble_galerkin, project_operator, project_rhs, residual_from_factors, residual_norm, GalerkinSystem,
    ProjectedOperator,
};
pub use stages::ROUNDOFF_FLOOR;
pub(crate) use stages::{solve_stages, StageProblem};

use crate::dirk::ButcherTable;
use crate::error::{Error, Result};
use crate::linalg::TridiagonalOperator;
use crate::lowrank::LowRankFactors;

/// Default cap on basis-growth iterations.
pub const DEFAULT_MAX_ITER: usize = 50;

/// Outcome of an adaptive solve or of one multi-stage step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Growth iterations `m` of the accepted basis.
    pub iterations: usize,
    /// Residual of the final stage.
    pub residual: f64,
    /// Tolerance of the final stage.
    pub tolerance: f64,
    /// `(r₁, r₂)` basis sizes.
    pub basis_dims: (usize, usize),
    /// Accepted residual of every stage.
    pub stage_residuals: Vec<f64>,
    /// For each basis size tried, the residual of the stage that decided the outcome.
    pub residual_history: Vec<f64>,
    /// Basis regrowths caused by a stage after the first.
    pub restarts: usize,
}

/// `ε_tol = C Δtᵖ⁺¹`.
pub fn lte_tolerance(c: f64, dt: f64, order: u32) -> Result<f64> {
    if !(c > 0.0) || !(dt > 0.0) || !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!(
            "lte_tolerance needs C > 0, dt > 0, order in 1..=3 (got {c}, {dt}, {order})"
        )));
    }
    Ok(c * dt.powi(order as i32 + 1))
}

/// Per-stage tolerances `C_k Δtᵖ⁺¹` for a table of order `p`. A single
/// constant applies to every stage.
pub fn stage_tolerances(constants: &[f64], dt: f64, table: &ButcherTable) -> Result<Vec<f64>> {
    let s = table.stages();
    match constants.len() {
        1 => Ok(vec![lte_tolerance(constants[0], dt, table.order())?; s]),
        n if n == s => constants.iter().map(|&c| lte_tolerance(c, dt, table.order())).collect(),
        n => Err(Error::InvalidInput(format!(
            "{n} tolerance constants for the {s}-stage table {}",
            table.name()
        ))),
    }
}

/// Grows bases until the Galerkin solution of `A₁F + FA₂ᵀ = B` has residual
/// below `tol` (raised to the roundoff level set by [`ROUNDOFF_FLOOR`]). The
/// returned factors are orthonormal and untruncated.
pub fn solve_adaptive(
    a1: &TridiagonalOperator,
    a2: &TridiagonalOperator,
    b: &LowRankFactors,
    tol: f64,
    max_iter: usize,
) -> Result<(LowRankFactors, Diagnostics)> {
    let ops = [(a1.clone(), a2.clone())];
    solve_stages(&StageProblem {
        rhs: b,
        ops: &ops,
        table: &[vec![1.0]],
        dt: 1.0,
        tolerances: &[tol],
        max_iter,
    })
}
