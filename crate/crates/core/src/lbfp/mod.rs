//! Multi-species Lenard–Bernstein–Fokker–Planck (Dougherty) collisions in two
//! velocity dimensions.
//!
//! Each step first integrates the moment equations implicitly, then builds
//! the Chang–Cooper operators from the step-end moments, advances every
//! species with the adaptive-rank DIRK solver and finally restores the
//! step-end moments with a conservative projection.

mod chang_cooper;
mod lomac;
mod moments;

pub use chang_cooper::{build_lbfp_operators, chang_cooper_delta};
pub use lomac::{lomac_project, macroscopic_projection, WeightedBasis};
pub use moments::{
    collision_coefficients, equilibrium_state, moment_dirk_solve, moment_rhs, CollisionCoefficients, MomentSolve,
    MomentState, NEWTON_MAX_ITER, NEWTON_TOL,
};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dirk::{dirk_step, stage_operators, ButcherTable, DenseDirkStepper, StepSettings};
use crate::error::{Error, Result};
use crate::krylov::{stage_tolerances, Diagnostics};
use crate::lowrank::{leading_singular_value, lr_moments, truncate, LowRankFactors, Moments};

/// A charged species.
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub mass: f64,
    pub charge: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, mass: f64, charge: f64) -> Self {
        Species { name: name.into(), mass, charge }
    }
}

/// Cell-centred uniform velocity grid on `[−L, L]` with nodes `−L + (i + ½)Δv`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    nodes: Vec<f64>,
    dv: f64,
}

impl VelocityGrid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("velocity grid needs at least 4 cells, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid velocity half-width {half_width}")));
        }
        let dv = 2.0 * half_width / n as f64;
        let nodes = (0..n).map(|i| -half_width + (i as f64 + 0.5) * dv).collect();
        Ok(VelocityGrid { nodes, dv })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn cell_area(&self) -> f64 {
        self.dv * self.dv
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Initial data of one species: an equal mixture of two Maxwellians with
/// drifts `±drift` and temperature `temperature`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesInit {
    pub species: Species,
    pub density: f64,
    pub drift: [f64; 2],
    pub temperature: f64,
}

impl SpeciesInit {
    pub fn thermal_speed(&self) -> f64 {
        (self.temperature / self.species.mass).sqrt()
    }
}

/// Rank-two factors of `n/(2π v_th²) · ½[M(+u) + M(−u)]` sampled on `grid`.
pub fn bi_maxwellian(grid: &VelocityGrid, init: &SpeciesInit) -> Result<LowRankFactors> {
    let vth = init.thermal_speed();
    if !(vth > 0.0) || !(init.density > 0.0) {
        return Err(Error::InvalidInput(format!("invalid initial data for {}", init.species.name)));
    }
    let gauss = |c: f64| -> Vec<f64> {
        grid.nodes().iter().map(|v| (-(v - c) * (v - c) / (2.0 * vth * vth)).exp()).collect()
    };
    let amp = 0.5 * init.density / (2.0 * std::f64::consts::PI * vth * vth);
    let [u1, u2] = init.drift;
    LowRankFactors::from_outer_products(&[(gauss(u1), gauss(u2), amp), (gauss(-u1), gauss(-u2), amp)])
}

/// Species and their velocity grids.
#[derive(Debug, Clone)]
pub struct LbfpProblem {
    pub species: Vec<Species>,
    pub grids: Vec<VelocityGrid>,
    pub inits: Vec<SpeciesInit>,
}

/// Distributions and moment states at time `t`.
#[derive(Debug, Clone)]
pub struct LbfpState {
    pub t: f64,
    pub f: Vec<LowRankFactors>,
    /// Moments evolved by the implicit moment system.
    pub moments: Vec<MomentState>,
}

impl LbfpProblem {
    /// Each species gets an `n × n` grid spanning `±width` initial thermal speeds.
    pub fn new(inits: Vec<SpeciesInit>, n: usize, width: f64) -> Result<Self> {
        if inits.is_empty() {
            return Err(Error::InvalidInput("no species".into()));
        }
        let grids = inits
            .iter()
            .map(|i| VelocityGrid::new(n, width * i.thermal_speed()))
            .collect::<Result<Vec<_>>>()?;
        Ok(LbfpProblem { species: inits.iter().map(|i| i.species.clone()).collect(), grids, inits })
    }

    /// Ions and electrons, each a pair of counter-drifting Maxwellians, on
    /// grids spanning ten initial thermal speeds.
    pub fn ion_electron(n: usize) -> Result<Self> {
        let inits = vec![
            SpeciesInit {
                species: Species::new("ion", 1.0, 1.0),
                density: 1.0,
                drift: [2.0, 2.0],
                temperature: 1.1,
            },
            SpeciesInit {
                species: Species::new("electron", 1.0 / 1836.0, -1.0),
                density: 1.0,
                drift: [10.0, 10.0],
                temperature: 0.9,
            },
        ];
        Self::new(inits, n, 10.0)
    }

    /// Initial state truncated at `eps_rel σ₁`; the moment states start from
    /// the discrete moments of the truncated distributions.
    pub fn initial_state(&self, eps_rel: f64) -> Result<LbfpState> {
        let mut f = Vec::with_capacity(self.inits.len());
        for (init, grid) in self.inits.iter().zip(&self.grids) {
            let g = bi_maxwellian(grid, init)?;
            let eps = eps_rel * leading_singular_value(&g)?;
            f.push(truncate(&g, eps)?);
        }
        let moments = self.kinetic_moments(&f)?;
        Ok(LbfpState { t: 0.0, f, moments })
    }

    /// Discrete moments of the distributions.
    pub fn kinetic_moments(&self, f: &[LowRankFactors]) -> Result<Vec<Moments>> {
        if f.len() != self.grids.len() {
            return Err(Error::dims("kinetic_moments", self.grids.len(), f.len()));
        }
        f.iter()
            .zip(&self.grids)
            .map(|(fa, g)| lr_moments(fa, g.nodes(), g.nodes(), g.cell_area()))
            .collect()
    }

    /// Discrete moments of full-rank distributions.
    pub fn dense_moments(&self, f: &[DMatrix<f64>]) -> Result<Vec<Moments>> {
        if f.len() != self.grids.len() {
            return Err(Error::dims("dense_moments", self.grids.len(), f.len()));
        }
        let mut out = Vec::with_capacity(f.len());
        for (fa, g) in f.iter().zip(&self.grids) {
            if fa.shape() != (g.len(), g.len()) {
                return Err(Error::dims("dense_moments", g.len(), format!("{:?}", fa.shape())));
            }
            let v = g.nodes();
            let mut m = Moments::default();
            for j in 0..g.len() {
                for i in 0..g.len() {
                    let w = fa[(i, j)] * g.cell_area();
                    m.density += w;
                    m.flux[0] += v[i] * w;
                    m.flux[1] += v[j] * w;
                    m.energy += 0.5 * (v[i] * v[i] + v[j] * v[j]) * w;
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    /// Per-species kinetic temperatures.
    pub fn temperatures(&self, moments: &[Moments]) -> Vec<f64> {
        moments.iter().zip(&self.species).map(|(m, s)| m.temperature(s.mass)).collect()
    }

    /// Mass-weighted totals `(Σ m n, Σ m γ₁, Σ m γ₂, Σ m ℰ)`.
    pub fn totals(&self, moments: &[Moments]) -> [f64; 4] {
        let mut t = [0.0; 4];
        for (m, s) in moments.iter().zip(&self.species) {
            for (acc, x) in t.iter_mut().zip(m.as_array()) {
                *acc += s.mass * x;
            }
        }
        t
    }

    /// `Σ m n v_th`, the momentum scale of the initial data.
    pub fn momentum_scale(&self) -> f64 {
        self.inits.iter().map(|i| i.species.mass * i.density * i.thermal_speed()).sum()
    }

    fn operators(
        &self,
        coeffs: &CollisionCoefficients,
        table: &ButcherTable,
        dt: f64,
    ) -> Result<Vec<Vec<(crate::linalg::TridiagonalOperator, crate::linalg::TridiagonalOperator)>>> {
        (0..self.species.len())
            .map(|a| {
                let pair = build_lbfp_operators(a, coeffs, &self.grids[a])?;
                stage_operators(&[pair], table, dt)
            })
            .collect()
    }
}

/// Time-stepping settings for the collision problem.
#[derive(Debug, Clone)]
pub struct LbfpSettings {
    pub table: ButcherTable,
    pub dt: f64,
    /// `C_k` in the stage tolerances `C_k Δtᵖ⁺¹` (one value, or one per stage).
    pub tol_constants: Vec<f64>,
    /// Truncation threshold relative to the leading singular value.
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl LbfpSettings {
    /// Tolerance constants used for each built-in table.
    pub fn default_tol_constants(table: &ButcherTable) -> Vec<f64> {
        let c = if table.order() == 1 { 1.0 } else { 1e-3 };
        vec![c; table.stages()]
    }
}

/// Per-step solver report.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfpStepReport {
    pub diagnostics: Vec<Diagnostics>,
    pub newton_iterations: Vec<usize>,
}

/// Adaptive-rank integrator for an [`LbfpProblem`].
#[derive(Debug, Clone)]
pub struct LbfpStepper<'a> {
    problem: &'a LbfpProblem,
    settings: LbfpSettings,
    tolerances: Vec<f64>,
}

impl<'a> LbfpStepper<'a> {
    pub fn new(problem: &'a LbfpProblem, settings: LbfpSettings) -> Result<Self> {
        let tolerances = stage_tolerances(&settings.tol_constants, settings.dt, &settings.table)?;
        Ok(LbfpStepper { problem, settings, tolerances })
    }

    pub fn settings(&self) -> &LbfpSettings {
        &self.settings
    }

    pub fn step(&self, state: &LbfpState) -> Result<(LbfpState, LbfpStepReport)> {
        let p = self.problem;
        let s = &self.settings;
        let solve = moment_dirk_solve(&state.moments, &p.species, s.dt, &s.table)?;
        let coeffs = collision_coefficients(&solve.end, &p.species)?;
        let ops = p.operators(&coeffs, &s.table, s.dt)?;
        let step = StepSettings { table: &s.table, dt: s.dt, tolerances: &self.tolerances, max_iter: s.max_iter };
        let results: Vec<Result<(LowRankFactors, Diagnostics)>> = (0..p.species.len())
            .into_par_iter()
            .map(|a| {
                let grid = &p.grids[a];
                let exact = &solve.end[a];
                let mass = p.species[a].mass;
                dirk_step(&state.f[a], &ops[a], &step, |g| {
                    let eps = s.eps_rel * leading_singular_value(&g)?;
                    lomac_project(&g, exact, grid, mass, eps)
                })
            })
            .collect();
        let mut f = Vec::with_capacity(results.len());
        let mut diagnostics = Vec::with_capacity(results.len());
        for r in results {
            let (fa, d) = r?;
            f.push(fa);
            diagnostics.push(d);
        }
        let next = LbfpState { t: state.t + s.dt, f, moments: solve.end };
        Ok((next, LbfpStepReport { diagnostics, newton_iterations: solve.newton_iterations }))
    }

    /// Advances `nsteps` steps, calling `observe(step_index, state, report)` after each.
    pub fn run<O>(&self, state: &LbfpState, nsteps: usize, mut observe: O) -> Result<LbfpState>
    where
        O: FnMut(usize, &LbfpState, &LbfpStepReport),
    {
        let mut cur = state.clone();
        for n in 0..nsteps {
            let (next, report) = self.step(&cur)?;
            observe(n + 1, &next, &report);
            cur = next;
        }
        Ok(cur)
    }
}

/// Full-rank reference state.
#[derive(Debug, Clone)]
pub struct DenseLbfpState {
    pub t: f64,
    pub f: Vec<DMatrix<f64>>,
    pub moments: Vec<MomentState>,
}

impl DenseLbfpState {
    pub fn from_low_rank(state: &LbfpState) -> Self {
        DenseLbfpState { t: state.t, f: state.f.iter().map(|f| f.materialize()).collect(), moments: state.moments.clone() }
    }
}

/// Full-rank step with the same moment solve and operators as [`LbfpStepper`]
/// and dense Sylvester stage solves; the operators are refactorized every step.
pub fn dense_lbfp_step(problem: &LbfpProblem, state: &DenseLbfpState, table: &ButcherTable, dt: f64) -> Result<DenseLbfpState> {
    let solve = moment_dirk_solve(&state.moments, &problem.species, dt, table)?;
    let coeffs = collision_coefficients(&solve.end, &problem.species)?;
    let mut f = Vec::with_capacity(state.f.len());
    for (a, fa) in state.f.iter().enumerate() {
        let pair = build_lbfp_operators(a, &coeffs, &problem.grids[a])?;
        f.push(DenseDirkStepper::new(&[pair], table, dt)?.step(fa)?);
    }
    Ok(DenseLbfpState { t: state.t + dt, f, moments: solve.end })
}
