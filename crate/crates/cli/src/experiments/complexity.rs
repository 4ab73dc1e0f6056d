use std::time::Instant;

use exkry_core::heat::{dense_heat_stepper, HeatProblem, HeatSettings, HeatStepper};
use exkry_core::lbfp::{dense_lbfp_step, DenseLbfpState, LbfpProblem, LbfpSettings, LbfpStepper};

use super::{log_log_slope, median};
use crate::config::{ComplexityPlan, Model};
use crate::error::{CliError, Context};
use crate::output::{num, Table};

#[derive(Debug, Clone)]
pub struct TimingPoint {
    pub pipeline: &'static str,
    pub n: usize,
    pub steps: usize,
    /// Median over the repetitions.
    pub wall_seconds: f64,
    /// Largest rank seen in the last repetition; the grid size for dense runs.
    pub max_rank: usize,
}

#[derive(Debug, Clone)]
pub struct ComplexityResult {
    pub points: Vec<TimingPoint>,
    pub slope_lowrank: f64,
    /// `None` when no dense sizes were requested.
    pub slope_dense: Option<f64>,
}

impl ComplexityResult {
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut t = Table::new(&["pipeline", "N", "steps", "wall_seconds", "max_rank"]);
        for p in &self.points {
            t.push(vec![
                p.pipeline.to_string(),
                p.n.to_string(),
                p.steps.to_string(),
                num(p.wall_seconds),
                p.max_rank.to_string(),
            ]);
        }
        t.push_footer("slope", vec!["lowrank".into(), num(self.slope_lowrank)]);
        if let Some(s) = self.slope_dense {
            t.push_footer("slope", vec!["dense".into(), num(s)]);
        }
        vec![("timing.csv", t)]
    }
}

/// Median wall time of `repetitions` calls after one untimed warm-up call.
fn timed(repetitions: usize, mut f: impl FnMut() -> Result<usize, CliError>) -> Result<(f64, usize), CliError> {
    f()?;
    let mut times = Vec::with_capacity(repetitions);
    let mut rank = 0;
    for _ in 0..repetitions {
        let start = Instant::now();
        rank = f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    Ok((median(times), rank))
}

fn lbfp_point(plan: &ComplexityPlan, n: usize, dense: bool) -> Result<TimingPoint, CliError> {
    let p = LbfpProblem::new(plan.species.clone(), n, plan.width).context(|| format!("collision problem N={n}"))?;
    let s0 = p.initial_state(plan.eps_rel).context(|| "initial distributions".into())?;
    let table = plan.integrator.table();
    let ctx = |k: usize| format!("collision N={n} step {k}");
    let (wall, max_rank, steps) = if dense {
        let d0 = DenseLbfpState::from_low_rank(&s0);
        let (w, r) = timed(plan.repetitions, || {
            let mut d = d0.clone();
            for k in 1..=plan.dense_steps {
                d = dense_lbfp_step(&p, &d, &table, plan.dt).context(|| ctx(k))?;
            }
            Ok(n)
        })?;
        (w, r, plan.dense_steps)
    } else {
        let settings = LbfpSettings {
            table: table.clone(),
            dt: plan.dt,
            tol_constants: plan.tol_constants.clone(),
            eps_rel: plan.eps_rel,
            max_iter: plan.max_iter,
        };
        let (w, r) = timed(plan.repetitions, || {
            let stepper = LbfpStepper::new(&p, settings.clone()).context(|| "collision stepper".into())?;
            let mut s = s0.clone();
            let mut rank = 0;
            for k in 1..=plan.steps {
                s = stepper.step(&s).context(|| ctx(k))?.0;
                rank = s.f.iter().map(|f| f.rank()).max().unwrap_or(0).max(rank);
            }
            Ok(rank)
        })?;
        (w, r, plan.steps)
    };
    Ok(TimingPoint { pipeline: if dense { "dense" } else { "lowrank" }, n, steps, wall_seconds: wall, max_rank })
}

fn heat_point(plan: &ComplexityPlan, n: usize, dense: bool) -> Result<TimingPoint, CliError> {
    let p = HeatProblem::new(n, n, plan.d.0, plan.d.1).context(|| format!("heat problem N={n}"))?;
    let table = plan.integrator.table();
    let ctx = |k: usize| format!("heat N={n} step {k}");
    let (wall, max_rank, steps) = if dense {
        let f0 = p.initial_condition().materialize();
        let (w, r) = timed(plan.repetitions, || {
            let stepper = dense_heat_stepper(&p, &table, plan.dt).context(|| "dense heat stepper".into())?;
            let mut f = f0.clone();
            for k in 1..=plan.dense_steps {
                f = stepper.step(&f).context(|| ctx(k))?;
            }
            Ok(n)
        })?;
        (w, r, plan.dense_steps)
    } else {
        let f0 = p.initial_condition();
        let settings = HeatSettings {
            table: table.clone(),
            dt: plan.dt,
            tol_constants: plan.tol_constants.clone(),
            eps_rel: plan.eps_rel,
            lomac: false,
            max_iter: plan.max_iter,
        };
        let (w, r) = timed(plan.repetitions, || {
            let stepper = HeatStepper::new(&p, settings.clone()).context(|| "heat stepper".into())?;
            let mut f = f0.clone();
            let mut rank = 0;
            for k in 1..=plan.steps {
                f = stepper.step(&f).context(|| ctx(k))?.0;
                rank = rank.max(f.rank());
            }
            Ok(rank)
        })?;
        (w, r, plan.steps)
    };
    Ok(TimingPoint { pipeline: if dense { "dense" } else { "lowrank" }, n, steps, wall_seconds: wall, max_rank })
}

/// Wall time against grid size. Points run one after another so they do not
/// compete for cores; problem setup and the initial condition are untimed.
pub fn complexity_sweep(plan: &ComplexityPlan) -> Result<ComplexityResult, CliError> {
    let point = |n: usize, dense: bool| match plan.model {
        Model::Lbfp => lbfp_point(plan, n, dense),
        Model::Heat => heat_point(plan, n, dense),
    };
    let mut points = Vec::new();
    for &n in &plan.n_list {
        points.push(point(n, false)?);
    }
    for &n in &plan.dense_n_list {
        points.push(point(n, true)?);
    }
    let slope = |pipeline: &str| {
        let (n, t): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.pipeline == pipeline)
            .map(|p| (p.n as f64, p.wall_seconds))
            .unzip();
        (n.len() > 1).then(|| log_log_slope(&n, &t))
    };
    let slope_lowrank = slope("lowrank").unwrap_or(f64::NAN);
    let slope_dense = slope("dense");
    Ok(ComplexityResult { points, slope_lowrank, slope_dense })
}
