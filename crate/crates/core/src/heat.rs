//! Periodic 2-D heat equation `∂F/∂t = d₁∂²ₓF + d₂∂²ᵧF` on the unit square.

use nalgebra::DMatrix;

use crate::dirk::{dirk_step, stage_operators, ButcherTable, DenseDirkStepper, StepSettings};
use crate::error::{Error, Result};
use crate::krylov::{stage_tolerances, Diagnostics};
use crate::linalg::TridiagonalOperator;
use crate::lowrank::{leading_singular_value, lr_add, truncate, LowRankFactors};

/// Rows materialized at a time by the blocked L¹ norm.
pub const L1_ROW_BLOCK: usize = 1024;

/// Amplitude, centre and width of each separable Gaussian in the initial data.
const INITIAL_GAUSSIANS: [(f64, (f64, f64)); 2] = [(0.5, (0.3, 0.35)), (0.8, (0.65, 0.5))];
const INITIAL_WIDTH: f64 = 400.0;

/// `d ∂²ₓ` by central differences on a periodic grid of `n` nodes.
pub fn build_heat_operator(n: usize, d: f64, dx: f64) -> Result<TridiagonalOperator> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("periodic grid needs at least 3 nodes, got {n}")));
    }
    let c = d / (dx * dx);
    TridiagonalOperator::constant(n, c, -2.0 * c, c)?.with_periodic_corners(c, c)
}

/// Grid, operators and conserved mass of a heat test problem.
#[derive(Debug, Clone)]
pub struct HeatProblem {
    pub n1: usize,
    pub n2: usize,
    pub dx: f64,
    pub dy: f64,
    pub d1: f64,
    pub d2: f64,
    pub op1: TridiagonalOperator,
    pub op2: TridiagonalOperator,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Mass of the initial condition.
    pub n_exact: f64,
}

impl HeatProblem {
    /// `n1 × n2` nodes `xᵢ = i/n1`, `yⱼ = j/n2` on the periodic unit square.
    pub fn new(n1: usize, n2: usize, d1: f64, d2: f64) -> Result<Self> {
        if !(d1 >= 0.0 && d2 >= 0.0 && d1.is_finite() && d2.is_finite()) {
            return Err(Error::InvalidInput(format!("diffusivities must be non-negative, got {d1}, {d2}")));
        }
        let (dx, dy) = (1.0 / n1 as f64, 1.0 / n2 as f64);
        let op1 = build_heat_operator(n1, d1, dx)?;
        let op2 = build_heat_operator(n2, d2, dy)?;
        let x = (0..n1).map(|i| i as f64 * dx).collect();
        let y = (0..n2).map(|j| j as f64 * dy).collect();
        let mut p = HeatProblem { n1, n2, dx, dy, d1, d2, op1, op2, x, y, n_exact: 0.0 };
        p.n_exact = p.mass(&p.initial_condition());
        Ok(p)
    }

    /// Square grid with `d₁ = d₂ = ½`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, 0.5, 0.5)
    }

    pub fn initial_condition(&self) -> LowRankFactors {
        heat_initial_condition(&self.x, &self.y)
    }

    /// `ΔxΔy Σ F`.
    pub fn mass(&self, f: &LowRankFactors) -> f64 {
        self.dx * self.dy * f.total_sum()
    }

    /// Constant the solution relaxes to.
    pub fn steady_value(&self) -> f64 {
        self.n_exact / (self.n1 as f64 * self.n2 as f64 * self.dx * self.dy)
    }

    pub fn steady_state(&self) -> LowRankFactors {
        constant_factors(self.n1, self.n2, self.steady_value())
    }

    /// `ΔxΔy Σ |F − G|`, materialized in row blocks.
    pub fn l1_distance(&self, f: &LowRankFactors, g: &LowRankFactors) -> Result<f64> {
        let diff = lr_add(f, &g.scaled(-1.0))?;
        Ok(self.dx * self.dy * diff.l1_sum_blocked(L1_ROW_BLOCK))
    }

    /// `ΔxΔy Σ |F − G|` for a dense `F`.
    pub fn l1_distance_dense(&self, f: &DMatrix<f64>, g: &LowRankFactors) -> Result<f64> {
        if f.shape() != g.shape() {
            return Err(Error::dims("l1_distance_dense", format!("{:?}", g.shape()), format!("{:?}", f.shape())));
        }
        let mut total = 0.0;
        let mut start = 0;
        while start < self.n1 {
            let len = L1_ROW_BLOCK.min(self.n1 - start);
            let block = g.materialize_rows(start, len);
            total += (f.rows(start, len) - block).iter().map(|v| v.abs()).sum::<f64>();
            start += len;
        }
        Ok(self.dx * self.dy * total)
    }

    /// Exact solution of the semi-discrete system `dF/dt = D₁F + FD₂ᵀ` at
    /// time `t`, `exp(tD₁) F₀ exp(tD₂)ᵀ`, using the Fourier diagonalization
    /// of the circulant operators.
    pub fn semi_discrete_reference(&self, t: f64) -> Result<LowRankFactors> {
        let f0 = self.initial_condition();
        let e1 = circulant_heat_propagator(self.n1, self.d1, self.dx, t);
        let e2 = circulant_heat_propagator(self.n2, self.d2, self.dy, t);
        LowRankFactors::new(e1 * f0.u(), f0.s().clone(), e2 * f0.v())
    }

    /// Stage operator pairs for the unshifted operators.
    pub fn operator_pair(&self) -> [(TridiagonalOperator, TridiagonalOperator); 1] {
        [(self.op1.clone(), self.op2.clone())]
    }
}

/// `Σₖ aₖ gₖ(x) gₖ(y)` with `gₖ(x) = exp(−400 (x − xₖ)²)`, built factor-wise.
pub fn heat_initial_condition(x: &[f64], y: &[f64]) -> LowRankFactors {
    let gauss = |grid: &[f64], c: f64| grid.iter().map(|&v| (-INITIAL_WIDTH * (v - c) * (v - c)).exp()).collect();
    let terms: Vec<_> = INITIAL_GAUSSIANS
        .iter()
        .map(|&(amp, (cx, cy))| (gauss(x, cx), gauss(y, cy), amp))
        .collect();
    LowRankFactors::from_outer_products(&terms).expect("two non-empty separable terms")
}

fn constant_factors(n1: usize, n2: usize, value: f64) -> LowRankFactors {
    LowRankFactors::from_outer_products(&[(vec![1.0; n1], vec![1.0; n2], value)]).expect("non-empty grid")
}

/// First row of `exp(t d ∂²ₓ)` on the periodic grid, expanded into the full circulant.
fn circulant_heat_propagator(n: usize, d: f64, dx: f64, t: f64) -> DMatrix<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let nf = n as f64;
    let mu: Vec<f64> = (0..n)
        .map(|k| (2.0 * d / (dx * dx)) * ((two_pi * k as f64 / nf).cos() - 1.0))
        .collect();
    let row: Vec<f64> = (0..n)
        .map(|m| {
            (0..n)
                .map(|k| (t * mu[k]).exp() * (two_pi * ((k * m) % n) as f64 / nf).cos())
                .sum::<f64>()
                / nf
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| row[(i + n - j) % n])
}

/// Replaces the constant (null-space) component of `F` with the one carrying
/// mass `n_exact`, truncates the remainder and restores the mass removed by
/// truncation. The result has orthonormal factors.
pub fn lomac_null_correction(
    f: &LowRankFactors,
    n_exact: f64,
    dx: f64,
    dy: f64,
    eps: f64,
) -> Result<LowRankFactors> {
    let (n1, n2) = f.shape();
    let cells = n1 as f64 * n2 as f64;
    let mean = f.total_sum() / cells;
    let f2 = lr_add(f, &constant_factors(n1, n2, -mean))?;
    let f2 = truncate(&f2, eps)?;
    let target = n_exact / (cells * dx * dy) - f2.total_sum() / cells;
    Ok(lr_add(&constant_factors(n1, n2, target), &f2)?.orthonormalized())
}

/// Time-stepping settings for the heat problem.
#[derive(Debug, Clone)]
pub struct HeatSettings {
    pub table: ButcherTable,
    pub dt: f64,
    /// `C_k` in the stage tolerances `C_k Δtᵖ⁺¹` (one value, or one per stage).
    pub tol_constants: Vec<f64>,
    /// Truncation threshold relative to the leading singular value.
    pub eps_rel: f64,
    pub lomac: bool,
    pub max_iter: usize,
}

/// Low-rank DIRK integrator for a [`HeatProblem`].
#[derive(Debug, Clone)]
pub struct HeatStepper<'a> {
    problem: &'a HeatProblem,
    settings: HeatSettings,
    ops: Vec<(TridiagonalOperator, TridiagonalOperator)>,
    tolerances: Vec<f64>,
}

impl<'a> HeatStepper<'a> {
    pub fn new(problem: &'a HeatProblem, settings: HeatSettings) -> Result<Self> {
        let ops = stage_operators(&problem.operator_pair(), &settings.table, settings.dt)?;
        for (a1, a2) in &ops {
            a1.prepare()?;
            a2.prepare()?;
        }
        let tolerances = stage_tolerances(&settings.tol_constants, settings.dt, &settings.table)?;
        Ok(HeatStepper { problem, settings, ops, tolerances })
    }

    pub fn step(&self, f: &LowRankFactors) -> Result<(LowRankFactors, Diagnostics)> {
        let step = StepSettings {
            table: &self.settings.table,
            dt: self.settings.dt,
            tolerances: &self.tolerances,
            max_iter: self.settings.max_iter,
        };
        let p = self.problem;
        let eps_rel = self.settings.eps_rel;
        let lomac = self.settings.lomac;
        dirk_step(f, &self.ops, &step, |g| {
            let eps = eps_rel * leading_singular_value(&g)?;
            if lomac {
                lomac_null_correction(&g, p.n_exact, p.dx, p.dy, eps)
            } else {
                truncate(&g, eps)
            }
        })
    }

    /// Advances `nsteps` steps, calling `observe(step_index, F, diagnostics)` after each.
    pub fn run<O>(&self, f0: &LowRankFactors, nsteps: usize, mut observe: O) -> Result<LowRankFactors>
    where
        O: FnMut(usize, &LowRankFactors, &Diagnostics),
    {
        let mut f = f0.clone();
        for n in 0..nsteps {
            let (g, diag) = self.step(&f)?;
            observe(n + 1, &g, &diag);
            f = g;
        }
        Ok(f)
    }
}

/// Full-rank reference integrator for a [`HeatProblem`].
pub fn dense_heat_stepper(problem: &HeatProblem, table: &ButcherTable, dt: f64) -> Result<DenseDirkStepper> {
    DenseDirkStepper::new(&problem.operator_pair(), table, dt)
}
