//! Diagonally implicit Runge–Kutta stepping for `dF/dt = D₁F + FD₂ᵀ` with
//! each stage posed as a Sylvester equation.

mod dense;
mod table;

pub use dense::{dense_dirk_step, DenseDirkStepper};
pub use table::{backward_euler, builtin_tables, dirk2, dirk3, table_by_name, ButcherTable};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::krylov::{solve_stages, Diagnostics, StageProblem};
use crate::linalg::TridiagonalOperator;
use crate::lowrank::LowRankFactors;

/// `½I − Δt a_kk D`, so that the Sylvester sum of the two stage operators is
/// `F − Δt a_kk (D₁F + FD₂ᵀ)`.
pub fn assemble_stage_operator(d: &TridiagonalOperator, dt: f64, akk: f64) -> TridiagonalOperator {
    d.shifted_scaled(0.5, -dt * akk)
}

/// Stage operators for every stage. `d` holds either one operator pair used
/// by all stages or one pair per stage.
pub fn stage_operators(
    d: &[(TridiagonalOperator, TridiagonalOperator)],
    table: &ButcherTable,
    dt: f64,
) -> Result<Vec<(TridiagonalOperator, TridiagonalOperator)>> {
    let s = table.stages();
    if d.len() != 1 && d.len() != s {
        return Err(Error::InvalidInput(format!("{} operator pairs for {s} stages", d.len())));
    }
    Ok((0..s)
        .map(|k| {
            let (d1, d2) = &d[if d.len() == 1 { 0 } else { k }];
            let akk = table.a(k, k);
            (assemble_stage_operator(d1, dt, akk), assemble_stage_operator(d2, dt, akk))
        })
        .collect())
}

/// Reduced right-hand side of stage `stage` (0-based):
/// `B̃⁽ᵏ⁾ = B̃₁ + Δt Σ_{ℓ<k} a_kℓ Ỹ_ℓ`, where `Ỹ_ℓ = (S⁽ˡ⁾ − B̃⁽ˡ⁾)/(a_ℓℓ Δt)`
/// are the projected stage derivatives held in `increments`.
pub fn stage_rhs(
    b1: &DMatrix<f64>,
    increments: &[DMatrix<f64>],
    a_row: &[f64],
    stage: usize,
    dt: f64,
) -> Result<DMatrix<f64>> {
    if increments.len() < stage {
        return Err(Error::MissingStage {
            stage,
            available: increments.len(),
        });
    }
    if a_row.len() < stage {
        return Err(Error::InvalidTable(format!("row for stage {stage} has {} entries", a_row.len())));
    }
    let mut out = b1.clone();
    for (l, y) in increments.iter().take(stage).enumerate() {
        if y.shape() != b1.shape() {
            return Err(Error::dims("stage_rhs", format!("{:?}", b1.shape()), format!("{:?}", y.shape())));
        }
        out += y * (dt * a_row[l]);
    }
    Ok(out)
}

/// Per-step settings shared by all stages.
#[derive(Debug, Clone)]
pub struct StepSettings<'a> {
    pub table: &'a ButcherTable,
    pub dt: f64,
    /// One residual tolerance per stage.
    pub tolerances: &'a [f64],
    pub max_iter: usize,
}

/// One adaptive-rank DIRK step. `stage_ops` are the assembled stage operators
/// (see [`stage_operators`]); `post_process` (truncation or a conservative
/// projection) is applied once to the final stage iterate.
pub fn dirk_step<P>(
    f_n: &LowRankFactors,
    stage_ops: &[(TridiagonalOperator, TridiagonalOperator)],
    settings: &StepSettings<'_>,
    post_process: P,
) -> Result<(LowRankFactors, Diagnostics)>
where
    P: FnOnce(LowRankFactors) -> Result<LowRankFactors>,
{
    if !(settings.dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step {} must be positive", settings.dt)));
    }
    if stage_ops.len() != settings.table.stages() {
        return Err(Error::InvalidInput(format!(
            "{} stage operators for a {}-stage table",
            stage_ops.len(),
            settings.table.stages()
        )));
    }
    let (f, diag) = solve_stages(&StageProblem {
        rhs: f_n,
        ops: stage_ops,
        table: settings.table.rows(),
        dt: settings.dt,
        tolerances: settings.tolerances,
        max_iter: settings.max_iter,
    })?;
    Ok((post_process(f)?, diag))
}
