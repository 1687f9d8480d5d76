//! Batch front-end: kernel tabulation, evolution, classical and particle
//! runs, and the acceptance suite.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qlbe::config::{RunConfig, ToleranceProfile};

#[derive(Parser, Debug)]
#[command(name = "qlbe", version, about = "Quantum linear Boltzmann equation simulator")]
struct Cli {
    /// JSON run configuration; the standard desk configuration when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master random seed (overrides the configuration).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Monitor tolerance profile (overrides the configuration).
    #[arg(long, global = true, value_parser = ["default", "strict"])]
    tolerance_profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate kernel tables for the configured offsets and scan their invariants.
    Kernel,
    /// Evolve the configured scenario and record monitors.
    Evolve,
    /// Integrate the classical equation for the diagonal sector.
    Classical,
    /// Run the particle simulation and compare it with Maxwell and the grid.
    Dsmc,
    /// Run the acceptance criteria; the exit code is the number of failures.
    Verify {
        /// Comma-separated criteria, e.g. AC-1,AC-7; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
    },
}

fn effective_config(cli: &Cli) -> qlbe::Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk(),
    };
    if let Some(o) = &cli.out {
        c.output = o.clone();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(p) = &cli.tolerance_profile {
        c.tolerance_profile = p.parse::<ToleranceProfile>()?;
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = effective_config(&cli).and_then(|config| {
        output::prepare(&config)?;
        match &cli.command {
            Command::Kernel => commands::kernel(&config),
            Command::Evolve => commands::evolve(&config),
            Command::Classical => commands::classical(&config),
            Command::Dsmc => commands::dsmc(&config),
            Command::Verify { criteria } => commands::verify(&config, criteria),
        }
    });
    match result {
        Ok(failures) => ExitCode::from(failures.min(255) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
