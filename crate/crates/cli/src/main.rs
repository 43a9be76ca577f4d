mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Experiments comparing predictive coding with backprop.
#[derive(Debug, Parser)]
#[command(name = "trustpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config; missing keys take their default values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Parent directory for run output.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Offset added to every seed in the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// 1MLP trajectories, landscapes, inference traces and the saddle race.
    Toy,
    /// Update alignment with the optimal direction over the first batches.
    Cosine,
    /// Depth × activation sweep over deep chains.
    Chains,
    /// Linear networks on an MNIST subset.
    Mnist,
    /// Weight-noise robustness at trained minima.
    Perturb,
    /// Loss and equilibrated-energy landscapes only.
    Landscape,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Toy => "toy",
            Command::Cosine => "cosine",
            Command::Chains => "chains",
            Command::Mnist => "mnist",
            Command::Perturb => "perturb",
            Command::Landscape => "landscape",
        }
    }
}

/// How a completed command turned out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Output was written but some run that should have converged diverged.
    Diverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command, cli.config.as_deref(), &cli.out, cli.seed) {
        Ok((dir, Outcome::Ok)) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Ok((dir, Outcome::Diverged)) => {
            println!("{}", dir.display());
            eprintln!("warning: training diverged; see {}", dir.join("manifest.json").display());
            ExitCode::from(2)
        }
        Err(e) => {
            let diverged = e.downcast_ref::<trustpc_core::Error>().is_some_and(|e| {
                matches!(e, trustpc_core::Error::NonFinite(_) | trustpc_core::Error::InferenceDivergence { .. })
            });
            eprintln!("error: {e:#}");
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}
