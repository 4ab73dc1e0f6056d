//! Experiment configuration files.
//!
//! A config is a TOML document. Top-level keys pick the experiment, nested
//! tables hold grid, time, solver and model parameters. Anything not given
//! falls back to a per-experiment default; unknown keys are rejected.
//!
//! ```toml
//! kind = "heat-convergence"   # heat-convergence | heat-steady | lbfp-relax | complexity-sweep
//! integrator = "dirk2"        # be | dirk2 | dirk3
//! seed = 0
//!
//! [grid]
//! n = 200                     # or n_list = [250, 500] for sweeps
//! dense_n_list = [64, 128]    # complexity sweeps only
//!
//! [time]
//! lambda = [100, 400, 900]    # Δt = λΔx², or give dt = 0.1
//! t_final = 0.2
//!
//! [solver]
//! eps_rel = 1e-10
//! tol_constants = [1.0]       # one value, or one per stage
//! max_iter = 50
//! lomac = false
//!
//! [heat]
//! d1 = 0.5
//! d2 = 0.5
//!
//! [lbfp]
//! width = 10.0
//! [[lbfp.species]]
//! name = "ion"
//! mass = 1.0
//! charge = 1.0
//! density = 1.0
//! drift = [2.0, 2.0]
//! temperature = 1.1
//!
//! [complexity]
//! model = "lbfp"              # heat | lbfp
//! steps = 20
//! dense_steps = 2
//! repetitions = 5
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use exkry_core::dirk::{backward_euler, dirk2, dirk3, ButcherTable};
use exkry_core::krylov::DEFAULT_MAX_ITER;
use exkry_core::lbfp::{LbfpSettings, Species, SpeciesInit};
use serde::Deserialize;

/// Invalid or unreadable configuration, located by field and line where possible.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}, `{}`: {}", self.field, self.message),
            None => write!(f, "config error in `{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    HeatConvergence,
    HeatSteady,
    LbfpRelax,
    ComplexitySweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Be,
    Dirk2,
    Dirk3,
}

impl Integrator {
    pub fn table(self) -> ButcherTable {
        match self {
            Integrator::Be => backward_euler(),
            Integrator::Dirk2 => dirk2(),
            Integrator::Dirk3 => dirk3(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Heat,
    Lbfp,
}

/// The document as written, before defaults and validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub integrator: Integrator,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub heat: HeatSection,
    #[serde(default)]
    pub lbfp: LbfpSection,
    #[serde(default)]
    pub complexity: ComplexitySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub dense_n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub lambda: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps_rel: Option<f64>,
    pub tol_constants: Option<Vec<f64>>,
    pub max_iter: Option<usize>,
    pub lomac: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfpSection {
    pub width: Option<f64>,
    #[serde(default)]
    pub species: Vec<SpeciesBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesBlock {
    pub name: String,
    pub mass: f64,
    pub charge: f64,
    pub density: f64,
    #[serde(default)]
    pub drift: [f64; 2],
    pub temperature: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySection {
    pub model: Option<Model>,
    pub steps: Option<usize>,
    pub dense_steps: Option<usize>,
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Heat problem and integrator settings shared by the heat experiments.
#[derive(Debug, Clone)]
pub struct HeatSetup {
    pub n: usize,
    pub d1: f64,
    pub d2: f64,
    pub integrator: Integrator,
    pub eps_rel: f64,
    pub tol_constants: Vec<f64>,
    pub max_iter: usize,
    pub lomac: bool,
}

#[derive(Debug, Clone)]
pub struct HeatConvergencePlan {
    pub setup: HeatSetup,
    pub lambdas: Vec<f64>,
    pub t_final: f64,
}

/// Long run toward the constant steady state with and without the
/// null-space correction, next to the full-rank run.
#[derive(Debug, Clone)]
pub struct HeatSteadyPlan {
    pub setup: HeatSetup,
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone)]
pub struct LbfpSetup {
    pub n: usize,
    pub width: f64,
    pub species: Vec<SpeciesInit>,
    pub integrator: Integrator,
    pub eps_rel: f64,
    pub tol_constants: Vec<f64>,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct LbfpRelaxPlan {
    pub setup: LbfpSetup,
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone)]
pub struct ComplexityPlan {
    pub model: Model,
    pub integrator: Integrator,
    pub n_list: Vec<usize>,
    pub dense_n_list: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub dense_steps: usize,
    pub repetitions: usize,
    pub eps_rel: f64,
    pub tol_constants: Vec<f64>,
    pub max_iter: usize,
    pub width: f64,
    pub species: Vec<SpeciesInit>,
    pub d: (f64, f64),
}

#[derive(Debug, Clone)]
pub enum Plan {
    HeatConvergence(HeatConvergencePlan),
    HeatSteady(HeatSteadyPlan),
    LbfpRelax(LbfpRelaxPlan),
    ComplexitySweep(ComplexityPlan),
}

/// A validated config with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub plan: Plan,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        field: path.display().to_string(),
        line: None,
        message: e.to_string(),
    })?;
    parse(&src)
}

pub fn parse(src: &str) -> Result<ResolvedConfig, ConfigError> {
    let raw: ExperimentConfig = toml::from_str(src).map_err(|e| syntax_error(src, &e))?;
    Validator { src }.resolve(raw)
}

fn syntax_error(src: &str, e: &toml::de::Error) -> ConfigError {
    let (field, line) = match e.span() {
        Some(span) => {
            let start = span.start.min(src.len());
            let line_no = src[..start].matches('\n').count() + 1;
            let line = src.lines().nth(line_no - 1).unwrap_or("");
            let field = match line.split_once('=') {
                Some((key, _)) => key.trim().to_string(),
                None => src[span.start.min(src.len())..span.end.min(src.len())].trim().to_string(),
            };
            (field, Some(line_no))
        }
        None => (String::new(), None),
    };
    ConfigError { field, line, message: e.message().trim().to_string() }
}

struct Validator<'a> {
    src: &'a str,
}

impl Validator<'_> {
    fn error(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { field: field.to_string(), line: locate(self.src, field), message: message.into() }
    }

    fn positive(&self, field: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(field, format!("must be positive and finite, got {v}")))
        }
    }

    fn resolve(&self, raw: ExperimentConfig) -> Result<ResolvedConfig, ConfigError> {
        let plan = match raw.kind {
            ExperimentKind::HeatConvergence => {
                let setup = self.heat_setup(&raw, 200, 1e-10)?;
                let lambdas = match &raw.time.lambda {
                    Some(l) => l.clone(),
                    None if raw.time.dt.is_some() => {
                        return Err(self.error("time.dt", "convergence runs take a lambda list, not dt"))
                    }
                    None => (1..=9).map(|k| 100.0 * k as f64).collect(),
                };
                if lambdas.is_empty() {
                    return Err(self.error("time.lambda", "must not be empty"));
                }
                for &l in &lambdas {
                    self.positive("time.lambda", l)?;
                }
                let t_final = self.positive("time.t_final", raw.time.t_final.unwrap_or(0.2))?;
                Plan::HeatConvergence(HeatConvergencePlan { setup, lambdas, t_final })
            }
            ExperimentKind::HeatSteady => {
                let mut setup = self.heat_setup(&raw, 128, 1e-10)?;
                setup.lomac = true;
                if raw.solver.lomac.is_some() {
                    return Err(self.error("solver.lomac", "steady runs always compare both settings"));
                }
                let dx = 1.0 / setup.n as f64;
                let dt = match (&raw.time.lambda, raw.time.dt) {
                    (Some(_), Some(_)) => return Err(self.error("time.dt", "give either lambda or dt")),
                    (Some(l), None) if l.len() == 1 => self.positive("time.lambda", l[0])? * dx * dx,
                    (Some(_), None) => return Err(self.error("time.lambda", "steady runs take a single lambda")),
                    (None, Some(dt)) => self.positive("time.dt", dt)?,
                    (None, None) => 100.0 * dx * dx,
                };
                let t_final = self.positive("time.t_final", raw.time.t_final.unwrap_or(2.0))?;
                Plan::HeatSteady(HeatSteadyPlan { setup, dt, t_final })
            }
            ExperimentKind::LbfpRelax => {
                let setup = self.lbfp_setup(&raw, 256)?;
                if raw.time.lambda.is_some() {
                    return Err(self.error("time.lambda", "collision runs take dt"));
                }
                let dt = self.positive("time.dt", raw.time.dt.unwrap_or(0.1))?;
                let t_final = self.positive("time.t_final", raw.time.t_final.unwrap_or(10.0))?;
                Plan::LbfpRelax(LbfpRelaxPlan { setup, dt, t_final })
            }
            ExperimentKind::ComplexitySweep => self.complexity(&raw)?,
        };
        Ok(ResolvedConfig { plan, seed: raw.seed, output_dir: raw.output.dir.clone() })
    }

    fn grid_n(&self, raw: &ExperimentConfig, default: usize, min: usize) -> Result<usize, ConfigError> {
        if raw.grid.n_list.is_some() {
            return Err(self.error("grid.n_list", "only complexity sweeps take a list of grid sizes"));
        }
        if raw.grid.dense_n_list.is_some() {
            return Err(self.error("grid.dense_n_list", "only complexity sweeps take a list of grid sizes"));
        }
        let n = raw.grid.n.unwrap_or(default);
        if n < min {
            return Err(self.error("grid.n", format!("must be at least {min}, got {n}")));
        }
        Ok(n)
    }

    fn solver(&self, raw: &ExperimentConfig, eps_default: f64, tol_default: Vec<f64>) -> Result<(f64, Vec<f64>, usize), ConfigError> {
        let eps_rel = raw.solver.eps_rel.unwrap_or(eps_default);
        if !(eps_rel > 0.0 && eps_rel < 1.0) {
            return Err(self.error("solver.eps_rel", format!("must lie in (0, 1), got {eps_rel}")));
        }
        let tol = raw.solver.tol_constants.clone().unwrap_or(tol_default);
        let stages = raw.integrator.table().stages();
        if tol.len() != 1 && tol.len() != stages {
            return Err(self.error(
                "solver.tol_constants",
                format!("expected 1 or {stages} values, got {}", tol.len()),
            ));
        }
        for &c in &tol {
            self.positive("solver.tol_constants", c)?;
        }
        let max_iter = raw.solver.max_iter.unwrap_or(DEFAULT_MAX_ITER);
        if max_iter == 0 {
            return Err(self.error("solver.max_iter", "must be positive"));
        }
        Ok((eps_rel, tol, max_iter))
    }

    fn diffusivities(&self, raw: &ExperimentConfig) -> Result<(f64, f64), ConfigError> {
        let mut d = [0.5; 2];
        for (k, (v, name)) in [(raw.heat.d1, "heat.d1"), (raw.heat.d2, "heat.d2")].into_iter().enumerate() {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(self.error(name, format!("must be non-negative and finite, got {v}")));
                }
                d[k] = v;
            }
        }
        Ok((d[0], d[1]))
    }

    fn heat_setup(&self, raw: &ExperimentConfig, n_default: usize, eps_default: f64) -> Result<HeatSetup, ConfigError> {
        self.reject_lbfp(raw)?;
        self.reject_complexity(raw)?;
        let n = self.grid_n(raw, n_default, 3)?;
        let (d1, d2) = self.diffusivities(raw)?;
        let (eps_rel, tol_constants, max_iter) = self.solver(raw, eps_default, vec![1.0])?;
        Ok(HeatSetup {
            n,
            d1,
            d2,
            integrator: raw.integrator,
            eps_rel,
            tol_constants,
            max_iter,
            lomac: raw.solver.lomac.unwrap_or(false),
        })
    }

    fn species(&self, raw: &ExperimentConfig) -> Result<(f64, Vec<SpeciesInit>), ConfigError> {
        let width = self.positive("lbfp.width", raw.lbfp.width.unwrap_or(10.0))?;
        if raw.lbfp.species.is_empty() {
            return Ok((width, default_species()));
        }
        let mut out = Vec::new();
        for (k, b) in raw.lbfp.species.iter().enumerate() {
            let field = |f: &str| format!("lbfp.species[{k}].{f}");
            self.positive(&field("mass"), b.mass)?;
            self.positive(&field("density"), b.density)?;
            self.positive(&field("temperature"), b.temperature)?;
            if !b.charge.is_finite() {
                return Err(self.error(&field("charge"), "must be finite"));
            }
            if b.drift.iter().any(|d| !d.is_finite()) {
                return Err(self.error(&field("drift"), "must be finite"));
            }
            out.push(SpeciesInit {
                species: Species::new(b.name.clone(), b.mass, b.charge),
                density: b.density,
                drift: b.drift,
                temperature: b.temperature,
            });
        }
        Ok((width, out))
    }

    fn lbfp_setup(&self, raw: &ExperimentConfig, n_default: usize) -> Result<LbfpSetup, ConfigError> {
        self.reject_heat(raw)?;
        self.reject_complexity(raw)?;
        if raw.solver.lomac.is_some() {
            return Err(self.error("solver.lomac", "collision runs always apply the moment correction"));
        }
        let n = self.grid_n(raw, n_default, 4)?;
        let (width, species) = self.species(raw)?;
        let table = raw.integrator.table();
        let (eps_rel, tol_constants, max_iter) =
            self.solver(raw, 1e-8, LbfpSettings::default_tol_constants(&table))?;
        Ok(LbfpSetup { n, width, species, integrator: raw.integrator, eps_rel, tol_constants, max_iter })
    }

    fn complexity(&self, raw: &ExperimentConfig) -> Result<Plan, ConfigError> {
        if raw.grid.n.is_some() {
            return Err(self.error("grid.n", "complexity sweeps take n_list"));
        }
        if raw.time.lambda.is_some() {
            return Err(self.error("time.lambda", "complexity sweeps take a fixed dt"));
        }
        if raw.time.t_final.is_some() {
            return Err(self.error("time.t_final", "complexity sweeps run a fixed number of steps"));
        }
        if raw.solver.lomac.is_some() {
            return Err(self.error("solver.lomac", "not used by complexity sweeps"));
        }
        let model = raw.complexity.model.unwrap_or(Model::Lbfp);
        let table = raw.integrator.table();
        let (n_default, dense_default, eps_default, tol_default) = match model {
            Model::Lbfp => (vec![250, 500, 1000, 2000], vec![64, 128, 256], 1e-8, LbfpSettings::default_tol_constants(&table)),
            Model::Heat => (vec![250, 500, 1000, 2000], vec![64, 128, 256], 1e-10, vec![1.0]),
        };
        match model {
            Model::Lbfp => self.reject_heat(raw)?,
            Model::Heat => self.reject_lbfp(raw)?,
        }
        let n_list = raw.grid.n_list.clone().unwrap_or(n_default);
        let dense_n_list = raw.grid.dense_n_list.clone().unwrap_or(dense_default);
        for (name, list) in [("grid.n_list", &n_list), ("grid.dense_n_list", &dense_n_list)] {
            if list.iter().any(|&n| n < 4) {
                return Err(self.error(name, "grid sizes must be at least 4"));
            }
        }
        if n_list.len() < 2 {
            return Err(self.error("grid.n_list", "need at least two grid sizes to fit a slope"));
        }
        if dense_n_list.len() == 1 {
            return Err(self.error("grid.dense_n_list", "need zero or at least two grid sizes"));
        }
        let dt = self.positive("time.dt", raw.time.dt.unwrap_or(0.1))?;
        let count = |v: Option<usize>, d: usize, name: &str| match v.unwrap_or(d) {
            0 => Err(self.error(name, "must be positive")),
            k => Ok(k),
        };
        let steps = count(raw.complexity.steps, 20, "complexity.steps")?;
        let dense_steps = count(raw.complexity.dense_steps, 2, "complexity.dense_steps")?;
        let repetitions = count(raw.complexity.repetitions, 5, "complexity.repetitions")?;
        let (eps_rel, tol_constants, max_iter) = self.solver(raw, eps_default, tol_default)?;
        let (width, species) = self.species(raw)?;
        Ok(Plan::ComplexitySweep(ComplexityPlan {
            model,
            integrator: raw.integrator,
            n_list,
            dense_n_list,
            dt,
            steps,
            dense_steps,
            repetitions,
            eps_rel,
            tol_constants,
            max_iter,
            width,
            species,
            d: self.diffusivities(raw)?,
        }))
    }

    fn reject_heat(&self, raw: &ExperimentConfig) -> Result<(), ConfigError> {
        if raw.heat.d1.is_some() || raw.heat.d2.is_some() {
            return Err(self.error("heat", "not used by this experiment"));
        }
        Ok(())
    }

    fn reject_lbfp(&self, raw: &ExperimentConfig) -> Result<(), ConfigError> {
        if raw.lbfp.width.is_some() || !raw.lbfp.species.is_empty() {
            return Err(self.error("lbfp", "not used by this experiment"));
        }
        Ok(())
    }

    fn reject_complexity(&self, raw: &ExperimentConfig) -> Result<(), ConfigError> {
        let c = &raw.complexity;
        if c.model.is_some() || c.steps.is_some() || c.dense_steps.is_some() || c.repetitions.is_some() {
            return Err(self.error("complexity", "only used by complexity sweeps"));
        }
        Ok(())
    }
}

/// Ions and electrons, each a pair of counter-drifting Maxwellians.
pub fn default_species() -> Vec<SpeciesInit> {
    vec![
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
    ]
}

/// Line of `field` (`table.key`, `table[k].key`, `table` or `key`) in `src`.
fn locate(src: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t.to_string(), Some(k)),
        None if src.lines().any(|l| header(l).as_deref() == Some(field)) => (field.to_string(), None),
        None => (String::new(), Some(field)),
    };
    // `lbfp.species[2]` is the third `[[lbfp.species]]` block.
    let (table, index) = match table.split_once('[') {
        Some((t, rest)) => (t.to_string(), rest.trim_end_matches(']').parse::<usize>().ok()),
        None => (table, None),
    };
    let mut current = String::new();
    let mut seen = 0usize;
    for (i, line) in src.lines().enumerate() {
        if let Some(h) = header(line) {
            if h == table {
                seen += 1;
                if key.is_none() {
                    return Some(i + 1);
                }
            }
            current = h;
            continue;
        }
        let in_block = current == table && index.is_none_or(|k| seen == k + 1);
        if let (true, Some(key)) = (in_block, key) {
            let t = line.trim_start();
            if t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('=')) {
                return Some(i + 1);
            }
        }
    }
    None
}

fn header(line: &str) -> Option<String> {
    let t = line.trim();
    let inner = t.strip_prefix("[[").and_then(|r| r.strip_suffix("]]"))
        .or_else(|| t.strip_prefix('[').and_then(|r| r.strip_suffix(']')))?;
    Some(inner.trim().to_string())
}
