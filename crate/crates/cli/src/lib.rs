//! Experiment harness: reads a config, runs a heat or collision experiment
//! and writes CSV tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, Plan, ResolvedConfig};
pub use error::CliError;
pub use output::Table;

/// Environment variable overriding the output directory of the config.
pub const OUT_DIR_ENV: &str = "EXKRY_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Compare,
    Validate,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// What a command did: files written and one-line summaries.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Tables and summary lines of an experiment, before anything is written.
pub fn evaluate(plan: &Plan, command: Command) -> Result<(Vec<(&'static str, Table)>, Vec<String>), CliError> {
    use experiments::*;
    let out = match (plan, command) {
        (_, Command::Validate) => (Vec::new(), Vec::new()),
        (Plan::HeatConvergence(p), Command::Run) => {
            let r = heat_convergence(p)?;
            let iters = r.points.iter().map(|p| p.max_iterations()).max().unwrap_or(0);
            let rank = r.points.iter().map(|p| p.max_rank()).max().unwrap_or(0);
            let s = format!("observed order {:.3} over {} points; max krylov iterations {iters}; max rank {rank}", r.slope, r.points.len());
            (r.tables(), vec![s])
        }
        (Plan::HeatConvergence(p), Command::Compare) => {
            let r = heat_compare(p)?;
            let worst = r.rows.iter().map(|r| r.rel_diff()).fold(0.0, f64::max);
            (r.tables(), vec![format!("largest relative error difference {worst:.3e}")])
        }
        (Plan::HeatSteady(p), Command::Run) => {
            let r = heat_steady(p)?;
            let last = r.last();
            let s = format!(
                "t={:.3}: error with correction {:.3e}, without {:.3e}, full rank {:.3e}",
                last.t, last.err_lomac, last.err_truncated, last.err_fullrank
            );
            (r.tables(), vec![s])
        }
        (Plan::LbfpRelax(p), Command::Run) => {
            let r = lbfp_relax(p)?;
            let last = r.last();
            let temps: Vec<String> = r
                .species
                .iter()
                .zip(&last.species)
                .map(|(n, s)| format!("{n} {:.5}", s.temperature))
                .collect();
            let s = vec![
                format!("max conservation error {:.3e}", r.max_conservation_error()),
                format!("t={:.3}: temperatures {}; equilibrium {:.5}", last.t, temps.join(", "), r.equilibrium_temperature),
            ];
            (r.tables(), s)
        }
        (Plan::LbfpRelax(p), Command::Compare) => {
            let r = lbfp_compare(p)?;
            let worst = r
                .rows
                .iter()
                .flat_map(|row| row.l1_diff.iter().zip(&row.l1_dense).map(|(d, n)| d / n))
                .fold(0.0, f64::max);
            (r.tables(), vec![format!("largest relative L1 difference {worst:.3e}")])
        }
        (Plan::ComplexitySweep(p), Command::Run) => {
            let r = complexity_sweep(p)?;
            let mut s = vec![format!("low-rank slope {:.3}", r.slope_lowrank)];
            if let Some(d) = r.slope_dense {
                s.push(format!("dense slope {d:.3}"));
            }
            (r.tables(), s)
        }
        (Plan::HeatSteady(_) | Plan::ComplexitySweep(_), Command::Compare) => {
            return Err(ConfigError {
                field: "kind".into(),
                line: None,
                message: "compare needs a heat-convergence or lbfp-relax config".into(),
            }
            .into())
        }
    };
    Ok(out)
}

/// Output directory: `--out`, then the environment override, then the config, then `out`.
pub fn output_dir(options: &Options, config: &ResolvedConfig) -> PathBuf {
    options
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn execute(command: Command, config_path: &Path, options: &Options) -> Result<Report, CliError> {
    let config = config::load(config_path)?;
    let seed = options.seed.unwrap_or(config.seed);
    if command == Command::Validate {
        return Ok(Report { files: Vec::new(), summary: vec![format!("{}: ok", config_path.display())] });
    }
    let (tables, summary) = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(|| evaluate(&config.plan, command))?,
        None => evaluate(&config.plan, command)?,
    };
    let dir = output_dir(options, &config);
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let mut files = Vec::with_capacity(tables.len());
    for (name, table) in tables {
        let path = dir.join(name);
        table.write(&path, seed)?;
        files.push(path);
    }
    Ok(Report { files, summary })
}
