use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use parametrix_cli::commands;
use parametrix_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "parametrix", version, about = "Transition densities of stable-driven SDEs with Hölder drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate the radial stable profile.
    KernelTable,
    /// Transition density and its decomposition.
    Density,
    /// Time derivative of the density.
    Derivative,
    /// Invariant checks; exits nonzero if any fails.
    Validate,
    /// Monte Carlo paths and comparison with the density.
    Simulate,
    /// Chapman–Kolmogorov consistency.
    CkTest,
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    let seed = cfg.mc.seed;
    let out = match cli.command {
        Command::KernelTable => commands::kernel_table(&cfg, &cli.out)?,
        Command::Density => commands::density(&cfg, &cli.out)?,
        Command::Derivative => commands::derivative(&cfg, &cli.out)?,
        Command::Validate => commands::validate(&cfg, &cli.out, seed)?,
        Command::Simulate => commands::simulate_cmd(&cfg, &cli.out)?,
        Command::CkTest => commands::ck_test(&cfg, &cli.out)?,
    };
    for f in &out.files {
        println!("{}", f.display());
    }
    Ok(out.ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
