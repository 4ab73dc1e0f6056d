use exkry_core::lbfp::{dense_lbfp_step, equilibrium_state, DenseLbfpState, LbfpProblem, LbfpSettings, LbfpState, LbfpStepper};
use exkry_core::lowrank::Moments;

use super::DENSE_MAX_N;
use crate::config::{ConfigError, LbfpRelaxPlan, LbfpSetup};
use crate::error::{CliError, Context};
use crate::output::{num, Table};

#[derive(Debug, Clone)]
pub struct SpeciesRow {
    pub moments: Moments,
    pub temperature: f64,
    pub rank: usize,
    pub krylov_iters: usize,
}

#[derive(Debug, Clone)]
pub struct RelaxRow {
    pub t: f64,
    pub species: Vec<SpeciesRow>,
    /// Largest relative density drift over the species.
    pub mass_err: f64,
    /// Drift of `|Σ m γ|` relative to `Σ m n v_th`.
    pub momentum_err: f64,
    /// Relative drift of `Σ m ℰ`.
    pub energy_err: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub struct RelaxResult {
    pub species: Vec<String>,
    pub rows: Vec<RelaxRow>,
    /// Temperature all species relax to.
    pub equilibrium_temperature: f64,
}

impl RelaxResult {
    pub fn last(&self) -> &RelaxRow {
        self.rows.last().expect("initial row")
    }

    /// Largest absolute entry of the three conservation columns.
    pub fn max_conservation_error(&self) -> f64 {
        self.rows.iter().map(|r| r.mass_err.max(r.momentum_err).max(r.energy_err)).fold(0.0, f64::max)
    }

    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut c = Table::new(&["t", "mass_err", "momentum_err", "energy_err"]);
        let mut m = Table::new(&["t", "species", "density", "momentum_x", "momentum_y", "energy", "temperature"]);
        let mut h = Table::new(&["t", "species", "rank", "krylov_iters", "newton_iters"]);
        for r in &self.rows {
            c.push(vec![num(r.t), num(r.mass_err), num(r.momentum_err), num(r.energy_err)]);
            for (name, s) in self.species.iter().zip(&r.species) {
                m.push(vec![
                    num(r.t),
                    name.clone(),
                    num(s.moments.density),
                    num(s.moments.flux[0]),
                    num(s.moments.flux[1]),
                    num(s.moments.energy),
                    num(s.temperature),
                ]);
                h.push(vec![
                    num(r.t),
                    name.clone(),
                    s.rank.to_string(),
                    s.krylov_iters.to_string(),
                    r.newton_iters.to_string(),
                ]);
            }
        }
        m.push_footer("equilibrium_temperature", vec![num(self.equilibrium_temperature)]);
        vec![("conservation.csv", c), ("moments.csv", m), ("rank_history.csv", h)]
    }
}

fn problem(setup: &LbfpSetup) -> Result<LbfpProblem, CliError> {
    LbfpProblem::new(setup.species.clone(), setup.n, setup.width).context(|| format!("collision problem N={}", setup.n))
}

fn settings(setup: &LbfpSetup, dt: f64) -> LbfpSettings {
    LbfpSettings {
        table: setup.integrator.table(),
        dt,
        tol_constants: setup.tol_constants.clone(),
        eps_rel: setup.eps_rel,
        max_iter: setup.max_iter,
    }
}

fn steps(plan: &LbfpRelaxPlan) -> (usize, f64) {
    let steps = ((plan.t_final / plan.dt).round() as usize).max(1);
    (steps, plan.t_final / steps as f64)
}

struct Reference {
    totals: [f64; 4],
    density: Vec<f64>,
    momentum_scale: f64,
}

impl Reference {
    fn new(p: &LbfpProblem, m: &[Moments]) -> Self {
        Reference { totals: p.totals(m), density: m.iter().map(|m| m.density).collect(), momentum_scale: p.momentum_scale() }
    }

    fn row(&self, p: &LbfpProblem, t: f64, state: &LbfpState, krylov: &[usize], newton_iters: usize) -> Result<RelaxRow, CliError> {
        let m = p.kinetic_moments(&state.f).context(|| "kinetic moments".into())?;
        let totals = p.totals(&m);
        let mass_err = m
            .iter()
            .zip(&self.density)
            .map(|(m, n0)| ((m.density - n0) / n0).abs())
            .fold(0.0, f64::max);
        let momentum_err = (totals[1].hypot(totals[2]) - self.totals[1].hypot(self.totals[2])).abs() / self.momentum_scale;
        let energy_err = ((totals[3] - self.totals[3]) / self.totals[3]).abs();
        let temps = p.temperatures(&m);
        let species = m
            .into_iter()
            .zip(temps)
            .zip(&state.f)
            .zip(krylov)
            .map(|(((moments, temperature), f), &krylov_iters)| SpeciesRow { moments, temperature, rank: f.rank(), krylov_iters })
            .collect();
        Ok(RelaxRow { t, species, mass_err, momentum_err, energy_err, newton_iters })
    }
}

/// Adaptive-rank relaxation with conservation and temperature history.
pub fn lbfp_relax(plan: &LbfpRelaxPlan) -> Result<RelaxResult, CliError> {
    let setup = &plan.setup;
    let p = problem(setup)?;
    let (nsteps, dt) = steps(plan);
    let s0 = p.initial_state(setup.eps_rel).context(|| "initial distributions".into())?;
    let (_, t_bar) = equilibrium_state(&s0.moments, &p.species).context(|| "equilibrium state".into())?;
    let reference = Reference::new(&p, &s0.moments);
    let stepper = LbfpStepper::new(&p, settings(setup, dt)).context(|| "collision stepper".into())?;
    let mut rows = vec![reference.row(&p, 0.0, &s0, &vec![0; p.species.len()], 0)?];
    let mut state = s0;
    for k in 1..=nsteps {
        let (next, report) = stepper
            .step(&state)
            .context(|| format!("collision {} N={} dt={dt:e} step {k}", setup.integrator.table().name(), setup.n))?;
        let krylov: Vec<usize> = report.diagnostics.iter().map(|d| d.iterations).collect();
        let newton = report.newton_iterations.iter().copied().max().unwrap_or(0);
        rows.push(reference.row(&p, k as f64 * dt, &next, &krylov, newton)?);
        state = next;
    }
    Ok(RelaxResult { species: p.species.iter().map(|s| s.name.clone()).collect(), rows, equilibrium_temperature: t_bar })
}

#[derive(Debug, Clone)]
pub struct LbfpCompareRow {
    pub t: f64,
    /// Per species: `ΔA Σ |F_lowrank − F_dense|` and `ΔA Σ |F_dense|`.
    pub l1_diff: Vec<f64>,
    pub l1_dense: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LbfpCompareResult {
    pub species: Vec<String>,
    pub rows: Vec<LbfpCompareRow>,
}

impl LbfpCompareResult {
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut t = Table::new(&["t", "species", "l1_diff", "l1_dense", "rel_diff"]);
        for r in &self.rows {
            for (k, name) in self.species.iter().enumerate() {
                t.push(vec![
                    num(r.t),
                    name.clone(),
                    num(r.l1_diff[k]),
                    num(r.l1_dense[k]),
                    num(r.l1_diff[k] / r.l1_dense[k]),
                ]);
            }
        }
        vec![("compare.csv", t)]
    }
}

/// Adaptive-rank and full-rank distributions compared in L¹ after every step.
pub fn lbfp_compare(plan: &LbfpRelaxPlan) -> Result<LbfpCompareResult, CliError> {
    let setup = &plan.setup;
    if setup.n > DENSE_MAX_N {
        return Err(ConfigError {
            field: "grid.n".into(),
            line: None,
            message: format!("full-rank comparison needs N <= {DENSE_MAX_N}, got {}", setup.n),
        }
        .into());
    }
    let p = problem(setup)?;
    let (nsteps, dt) = steps(plan);
    let table = setup.integrator.table();
    let s0 = p.initial_state(setup.eps_rel).context(|| "initial distributions".into())?;
    let stepper = LbfpStepper::new(&p, settings(setup, dt)).context(|| "collision stepper".into())?;
    let mut lr = s0.clone();
    let mut dense = DenseLbfpState::from_low_rank(&s0);
    let mut rows = Vec::with_capacity(nsteps);
    for k in 1..=nsteps {
        let (lr_next, dense_next) = rayon::join(
            || stepper.step(&lr).context(|| format!("collision step {k}")),
            || dense_lbfp_step(&p, &dense, &table, dt).context(|| format!("dense collision step {k}")),
        );
        lr = lr_next?.0;
        dense = dense_next?;
        let mut l1_diff = Vec::new();
        let mut l1_dense = Vec::new();
        for (a, grid) in p.grids.iter().enumerate() {
            let fd = &dense.f[a];
            l1_diff.push(grid.cell_area() * (lr.f[a].materialize() - fd).iter().map(|v| v.abs()).sum::<f64>());
            l1_dense.push(grid.cell_area() * fd.iter().map(|v| v.abs()).sum::<f64>());
        }
        rows.push(LbfpCompareRow { t: k as f64 * dt, l1_diff, l1_dense });
    }
    Ok(LbfpCompareResult { species: p.species.iter().map(|s| s.name.clone()).collect(), rows })
}
