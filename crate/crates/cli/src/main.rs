use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixflow_cli::{Command, CONFIG_HELP};

#[derive(Parser)]
#[command(name = "mixflow", version, about = "Mixed Hamiltonian variational flow experiments", after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
#[command(after_long_help = CONFIG_HELP)]
struct Common {
    /// Experiment config (TOML, or a run_meta.json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `replication.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// ELBO over the epsilon x N grid: elbo_sweep.csv, best.json.
    Sweep(Common),
    /// Full pipeline: elbo_vs_n.csv, samples.csv, ksd.json, stability.csv.
    Run(Common),
    /// i.i.d. draws only: samples.csv.
    Sample(Common),
    /// Density, Jacobian product and target density at points: density.csv.
    Density(Common),
    /// KSD, round-trip stability and trajectory ESS: ksd.json, stability.csv, ess.csv.
    Diagnose(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Sample(a) => (Command::Sample, a),
        Cmd::Density(a) => (Command::Density, a),
        Cmd::Diagnose(a) => (Command::Diagnose, a),
    };
    match mixflow_cli::run(cmd, &args.config, args.out.as_deref(), args.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixflow {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
