//! Shared-basis solve of the stage equations of a diagonally implicit scheme.
//!
//! A single pair of bases is grown with the first stage operators; each stage
//! then solves its own reduced Sylvester system on those bases. If any stage
//! misses its tolerance, the bases grow once more and all stages are redone.

use nalgebra::DMatrix;

use super::basis::ExtendedKrylovBasis;
use super::galerkin::{project_operator, project_rhs, residual_from_factors, ProjectedOperator};
use super::Diagnostics;
use crate::dirk::stage_rhs;
use crate::error::{Error, Result};
use crate::linalg::{DenseSylvester, TridiagonalOperator};
use crate::lowrank::LowRankFactors;

/// Relative roundoff floor on positive stage tolerances. Residuals below
/// `ROUNDOFF_FLOOR · (max|A₁| + max|A₂|) · ‖B⁽ᵏ⁾‖_F` are not resolvable in
/// double precision, so a smaller requested tolerance is raised to that
/// value. A zero tolerance is kept and never accepts.
pub const ROUNDOFF_FLOOR: f64 = 100.0 * f64::EPSILON;

pub(crate) fn effective_tolerance(tol: f64, op_scale: f64, rhs_norm: f64) -> f64 {
    if tol > 0.0 {
        tol.max(ROUNDOFF_FLOOR * op_scale * rhs_norm)
    } else {
        tol
    }
}

pub(crate) struct StageProblem<'a> {
    /// `Fₙ`, the right-hand side of the first stage.
    pub rhs: &'a LowRankFactors,
    /// `(A₁⁽ᵏ⁾, A₂⁽ᵏ⁾)` per stage.
    pub ops: &'a [(TridiagonalOperator, TridiagonalOperator)],
    /// Lower-triangular coefficient rows `a_{kℓ}`, `ℓ ≤ k`.
    pub table: &'a [Vec<f64>],
    pub dt: f64,
    pub tolerances: &'a [f64],
    pub max_iter: usize,
}

struct Projection {
    left: ProjectedOperator,
    right: ProjectedOperator,
    solver: DenseSylvester,
}

fn project(op: &(TridiagonalOperator, TridiagonalOperator), u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Projection> {
    let left = project_operator(&op.0, u)?;
    let right = project_operator(&op.1, v)?;
    let solver = DenseSylvester::new(&left.a, &right.a)?;
    Ok(Projection { left, right, solver })
}

enum Growth {
    Grew,
    Saturated,
}

fn grow(basis: &mut ExtendedKrylovBasis, op: &TridiagonalOperator) -> Result<Growth> {
    match basis.grow(op) {
        Ok(()) => Ok(Growth::Grew),
        Err(Error::BasisSaturated { .. }) => Ok(Growth::Saturated),
        Err(e) => Err(e),
    }
}

pub(crate) fn solve_stages(p: &StageProblem<'_>) -> Result<(LowRankFactors, Diagnostics)> {
    let s = p.ops.len();
    if s == 0 || p.table.len() != s || p.tolerances.len() != s {
        return Err(Error::InvalidInput(format!(
            "stage data mismatch: {} operators, {} table rows, {} tolerances",
            s,
            p.table.len(),
            p.tolerances.len()
        )));
    }
    let (n1, n2) = p.rhs.shape();
    for (a1, a2) in p.ops {
        if a1.n() != n1 || a2.n() != n2 {
            return Err(Error::dims("dirk_step", format!("{n1}x{n2} operators"), format!("{}x{}", a1.n(), a2.n())));
        }
    }
    // Stages with identical operators share one projection and one Schur pair.
    let canonical: Vec<usize> = (0..s)
        .map(|k| (0..k).find(|&j| p.ops[j] == p.ops[k]).unwrap_or(k))
        .collect();

    let mut ub = ExtendedKrylovBasis::new(p.rhs.u())?;
    let mut vb = ExtendedKrylovBasis::new(p.rhs.v())?;
    let mut diag = Diagnostics::default();
    let mut best: Option<(f64, f64, f64, LowRankFactors)> = None;

    for m in 0..=p.max_iter {
        if m > 0 {
            let gu = grow(&mut ub, &p.ops[0].0)?;
            let gv = grow(&mut vb, &p.ops[0].1)?;
            if matches!((gu, gv), (Growth::Saturated, Growth::Saturated)) {
                break;
            }
        }
        let (u, v) = (ub.q(), vb.q());
        let b1 = project_rhs(u, v, p.rhs)?;
        let mut projections: Vec<Option<Projection>> = (0..s).map(|_| None).collect();
        let mut increments: Vec<DMatrix<f64>> = Vec::with_capacity(s);
        let mut residuals = Vec::with_capacity(s);
        let mut tolerances_used = Vec::with_capacity(s);
        let mut rejected = None;
        let mut last_core = None;

        for k in 0..s {
            let c = canonical[k];
            if projections[c].is_none() {
                projections[c] = Some(project(&p.ops[c], u, v)?);
            }
            let proj = projections[c].as_ref().expect("projection assembled above");
            let bk = stage_rhs(&b1, &increments, &p.table[k], k, p.dt)?;
            let core = proj.solver.solve(&bk)?;
            let res = residual_from_factors(&proj.left.r, &proj.right.r, &bk, &core)?;
            residuals.push(res);
            let op_scale = p.ops[k].0.max_abs() + p.ops[k].1.max_abs();
            let tol = effective_tolerance(p.tolerances[k], op_scale, bk.norm());
            tolerances_used.push(tol);
            if !(res < tol) {
                rejected = Some((k, res, tol));
                last_core = Some(core);
                break;
            }
            if k + 1 < s {
                let akk = p.table[k][k];
                increments.push((&core - &bk) / (akk * p.dt));
            }
            last_core = Some(core);
        }

        let core = last_core.expect("at least one stage is solved");
        match rejected {
            None => {
                let res = *residuals.last().expect("all stages solved");
                diag.iterations = m;
                diag.residual = res;
                diag.tolerance = tolerances_used[s - 1];
                diag.basis_dims = (u.ncols(), v.ncols());
                diag.residual_history.push(res);
                diag.stage_residuals = residuals;
                let f = LowRankFactors::from_orthonormal_parts(u.clone(), core, v.clone());
                return Ok((f, diag));
            }
            Some((k, res, tol)) => {
                diag.residual_history.push(res);
                if k > 0 {
                    diag.restarts += 1;
                }
                let ratio = if tol > 0.0 { res / tol } else { res };
                if best.as_ref().is_none_or(|b| ratio < b.0) {
                    best = Some((ratio, res, tol, LowRankFactors::from_orthonormal_parts(u.clone(), core, v.clone())));
                }
            }
        }
    }
    let (_, residual, tolerance, best) = best.expect("a rejected iterate was recorded");
    Err(Error::MaxIterationsExceeded {
        iterations: ub.m(),
        residual,
        tolerance,
        best: Box::new(best),
    })
}
