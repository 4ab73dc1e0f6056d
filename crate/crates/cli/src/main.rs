use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exkry_cli::{execute, Command, Options};

#[derive(Parser)]
#[command(name = "exkry", version, about = "Adaptive-rank implicit integrator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the experiment described by a config file.
    Run(Target),
    /// Run the adaptive-rank and full-rank pipelines side by side.
    Compare(Target),
    /// Check a config file without running it.
    Validate(Target),
}

#[derive(Args)]
struct Target {
    config: PathBuf,
    /// Output directory (overrides EXKRY_OUT_DIR and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded with the outputs (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points and per-species solves.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, target) = match cli.command {
        Sub::Run(t) => (Command::Run, t),
        Sub::Compare(t) => (Command::Compare, t),
        Sub::Validate(t) => (Command::Validate, t),
    };
    let options = Options { out: target.out, seed: target.seed, threads: target.threads.map(usize::from) };
    match execute(command, &target.config, &options) {
        Ok(report) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            let mut out = std::io::stdout().lock();
            for line in &report.summary {
                let _ = writeln!(out, "{line}");
            }
            for f in &report.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
