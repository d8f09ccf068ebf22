use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gelsim::harness::{commands, ExperimentConfig};
use gelsim::Result;

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// One trajectory at the first grid mass.
    Simulate,
    /// Replica ensemble over the whole grid.
    Ensemble,
    /// Deterministic Smoluchowski solve.
    Ode,
    /// Closed-form bound constants and shapes.
    Bounds,
    /// Exact small-N expectations.
    Oracle,
    /// Tables from an existing ensemble summary.
    Report,
}

#[derive(Parser)]
#[command(name = "gelsim", version, about = "Coagulation simulations and gelation diagnostics")]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<String> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir());
    match cli.mode {
        Mode::Simulate => commands::simulate(&cfg, &out),
        Mode::Ensemble => commands::ensemble(&cfg, &out),
        Mode::Ode => commands::ode(&cfg, &out),
        Mode::Bounds => commands::bounds(&cfg, &out),
        Mode::Oracle => commands::oracle(&cfg, &out),
        Mode::Report => commands::report(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gelsim: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
