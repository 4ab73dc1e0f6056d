use rayon::prelude::*;

use exkry_core::heat::{dense_heat_stepper, HeatProblem, HeatSettings, HeatStepper};
use exkry_core::lowrank::LowRankFactors;

use super::{least_squares_slope, DENSE_MAX_N};
use crate::config::{ConfigError, HeatConvergencePlan, HeatSetup, HeatSteadyPlan};
use crate::error::{CliError, Context};
use crate::output::{num, Table};

/// Number of steps of size close to `λΔx²` that land exactly on `t_final`.
pub fn steps_for(lambda: f64, dx: f64, t_final: f64) -> usize {
    ((t_final / (lambda * dx * dx)).round() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct ConvergencePoint {
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub error: f64,
    /// `(t, rank, krylov_iters)` after every step.
    pub history: Vec<(f64, usize, usize)>,
}

impl ConvergencePoint {
    pub fn max_iterations(&self) -> usize {
        self.history.iter().map(|h| h.2).max().unwrap_or(0)
    }

    pub fn max_rank(&self) -> usize {
        self.history.iter().map(|h| h.1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub n: usize,
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of `log error` against `log Δt`.
    pub slope: f64,
}

impl ConvergenceResult {
    /// Order between each row and the previous one; `None` for the first.
    pub fn observed_orders(&self) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for w in self.points.windows(2) {
            out.push(Some((w[1].error / w[0].error).ln() / (w[1].dt / w[0].dt).ln()));
        }
        out
    }

    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut conv = Table::new(&["lambda", "dt", "steps", "error", "observed_order", "max_krylov_iters", "max_rank"]);
        for (p, order) in self.points.iter().zip(self.observed_orders()) {
            conv.push(vec![
                num(p.lambda),
                num(p.dt),
                p.steps.to_string(),
                num(p.error),
                order.map(num).unwrap_or_default(),
                p.max_iterations().to_string(),
                p.max_rank().to_string(),
            ]);
        }
        conv.push_footer("slope", vec![num(self.slope)]);
        let mut hist = Table::new(&["lambda", "t", "rank", "krylov_iters"]);
        for p in &self.points {
            for &(t, r, m) in &p.history {
                hist.push(vec![num(p.lambda), num(t), r.to_string(), m.to_string()]);
            }
        }
        vec![("convergence.csv", conv), ("rank_history.csv", hist)]
    }
}

fn problem(setup: &HeatSetup) -> Result<HeatProblem, CliError> {
    HeatProblem::new(setup.n, setup.n, setup.d1, setup.d2).context(|| format!("heat problem N={}", setup.n))
}

fn settings(setup: &HeatSetup, dt: f64, lomac: bool) -> HeatSettings {
    HeatSettings {
        table: setup.integrator.table(),
        dt,
        tol_constants: setup.tol_constants.clone(),
        eps_rel: setup.eps_rel,
        lomac,
        max_iter: setup.max_iter,
    }
}

fn run_low_rank(
    p: &HeatProblem,
    setup: &HeatSetup,
    dt: f64,
    steps: usize,
    lomac: bool,
    mut observe: impl FnMut(usize, &LowRankFactors, usize) -> Result<(), CliError>,
) -> Result<LowRankFactors, CliError> {
    let ctx = || format!("heat {} N={} dt={dt:e}", setup.integrator.table().name(), setup.n);
    let stepper = HeatStepper::new(p, settings(setup, dt, lomac)).context(ctx)?;
    let mut f = p.initial_condition();
    for k in 1..=steps {
        let (g, d) = stepper.step(&f).context(|| format!("{} step {k}", ctx()))?;
        observe(k, &g, d.iterations)?;
        f = g;
    }
    Ok(f)
}

/// L¹ error against the exact semi-discrete solution at `t_final`, one
/// sweep point per λ, run in parallel.
pub fn heat_convergence(plan: &HeatConvergencePlan) -> Result<ConvergenceResult, CliError> {
    let setup = &plan.setup;
    let p = problem(setup)?;
    let reference = p.semi_discrete_reference(plan.t_final).context(|| "heat reference".into())?;
    let points = plan
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let steps = steps_for(lambda, p.dx, plan.t_final);
            let dt = plan.t_final / steps as f64;
            let mut history = Vec::with_capacity(steps);
            let f = run_low_rank(&p, setup, dt, steps, setup.lomac, |k, g, m| {
                history.push((k as f64 * dt, g.rank(), m));
                Ok(())
            })?;
            let error = p.l1_distance(&f, &reference).context(|| "heat error".into())?;
            Ok(ConvergencePoint { lambda, dt, steps, error, history })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.dt.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let slope = if points.len() > 1 { least_squares_slope(&x, &y) } else { f64::NAN };
    Ok(ConvergenceResult { n: setup.n, points, slope })
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub err_lowrank: f64,
    pub err_dense: f64,
}

impl CompareRow {
    /// `|err_lowrank − err_dense| / err_dense`, zero when both vanish.
    pub fn rel_diff(&self) -> f64 {
        let d = (self.err_lowrank - self.err_dense).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.err_dense
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatCompareResult {
    pub rows: Vec<CompareRow>,
}

impl HeatCompareResult {
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut t = Table::new(&["lambda", "dt", "steps", "err_lowrank", "err_dense", "rel_diff"]);
        for r in &self.rows {
            t.push(vec![
                num(r.lambda),
                num(r.dt),
                r.steps.to_string(),
                num(r.err_lowrank),
                num(r.err_dense),
                num(r.rel_diff()),
            ]);
        }
        vec![("compare.csv", t)]
    }
}

fn check_dense_size(n: usize) -> Result<(), CliError> {
    if n > DENSE_MAX_N {
        return Err(ConfigError {
            field: "grid.n".into(),
            line: None,
            message: format!("full-rank comparison needs N <= {DENSE_MAX_N}, got {n}"),
        }
        .into());
    }
    Ok(())
}

/// Adaptive-rank and full-rank errors on identical steps.
pub fn heat_compare(plan: &HeatConvergencePlan) -> Result<HeatCompareResult, CliError> {
    let setup = &plan.setup;
    check_dense_size(setup.n)?;
    let p = problem(setup)?;
    let reference = p.semi_discrete_reference(plan.t_final).context(|| "heat reference".into())?;
    let table = setup.integrator.table();
    let rows = plan
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let steps = steps_for(lambda, p.dx, plan.t_final);
            let dt = plan.t_final / steps as f64;
            let f = run_low_rank(&p, setup, dt, steps, setup.lomac, |_, _, _| Ok(()))?;
            let err_lowrank = p.l1_distance(&f, &reference).context(|| "heat error".into())?;
            let dense = dense_heat_stepper(&p, &table, dt).context(|| format!("dense heat dt={dt:e}"))?;
            let mut fd = p.initial_condition().materialize();
            for k in 1..=steps {
                fd = dense.step(&fd).context(|| format!("dense heat dt={dt:e} step {k}"))?;
            }
            let err_dense = p.l1_distance_dense(&fd, &reference).context(|| "heat error".into())?;
            Ok(CompareRow { lambda, dt, steps, err_lowrank, err_dense })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(HeatCompareResult { rows })
}

#[derive(Debug, Clone)]
pub struct SteadyRow {
    pub t: f64,
    pub err_lomac: f64,
    pub err_truncated: f64,
    pub err_fullrank: f64,
    pub rank_lomac: usize,
    pub rank_truncated: usize,
    pub iters_lomac: usize,
}

#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub dt: f64,
    pub rows: Vec<SteadyRow>,
}

impl SteadyResult {
    pub fn last(&self) -> &SteadyRow {
        self.rows.last().expect("at least one step")
    }

    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut s = Table::new(&["t", "err_lomac", "err_truncated", "err_fullrank", "rank_lomac", "rank_truncated"]);
        let mut h = Table::new(&["t", "rank", "krylov_iters"]);
        for r in &self.rows {
            s.push(vec![
                num(r.t),
                num(r.err_lomac),
                num(r.err_truncated),
                num(r.err_fullrank),
                r.rank_lomac.to_string(),
                r.rank_truncated.to_string(),
            ]);
            h.push(vec![num(r.t), r.rank_lomac.to_string(), r.iters_lomac.to_string()]);
        }
        vec![("steady.csv", s), ("rank_history.csv", h)]
    }
}

/// L¹ distance to the constant steady state along three runs: with the
/// null-space correction, with plain truncation, and full rank.
pub fn heat_steady(plan: &HeatSteadyPlan) -> Result<SteadyResult, CliError> {
    let setup = &plan.setup;
    check_dense_size(setup.n)?;
    let p = problem(setup)?;
    let steady = p.steady_state();
    let steps = ((plan.t_final / plan.dt).round() as usize).max(1);
    let dt = plan.t_final / steps as f64;
    let low_rank = |lomac: bool| {
        let mut rows = Vec::with_capacity(steps);
        run_low_rank(&p, setup, dt, steps, lomac, |_, g, m| {
            rows.push((p.l1_distance(g, &steady).context(|| "steady error".into())?, g.rank(), m));
            Ok(())
        })?;
        Ok::<_, CliError>(rows)
    };
    let full = || {
        let table = setup.integrator.table();
        let dense = dense_heat_stepper(&p, &table, dt).context(|| format!("dense heat dt={dt:e}"))?;
        let mut fd = p.initial_condition().materialize();
        let mut errs = Vec::with_capacity(steps);
        for k in 1..=steps {
            fd = dense.step(&fd).context(|| format!("dense heat step {k}"))?;
            errs.push(p.l1_distance_dense(&fd, &steady).context(|| "steady error".into())?);
        }
        Ok::<_, CliError>(errs)
    };
    let (with, (without, dense)) = rayon::join(|| low_rank(true), || rayon::join(|| low_rank(false), full));
    let (with, without, dense) = (with?, without?, dense?);
    let rows = (0..steps)
        .map(|k| SteadyRow {
            t: (k + 1) as f64 * dt,
            err_lomac: with[k].0,
            err_truncated: without[k].0,
            err_fullrank: dense[k],
            rank_lomac: with[k].1,
            rank_truncated: without[k].1,
            iters_lomac: with[k].2,
        })
        .collect();
    Ok(SteadyResult { dt, rows })
}
