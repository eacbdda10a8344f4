use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qtrack", version, about = "Deterministic experiment runner for quadratic-drift tracking control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and CSVs
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's grid_steps
    #[arg(long = "grid-steps")]
    grid_steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow the saturation chain of a system and report certificates
    Saturate(CommonArgs),
    /// Synthesize a weak tracking control for a target curve
    Synthesize(CommonArgs),
    /// Integrate the closed-loop system under a given control
    Simulate(CommonArgs),
    /// Kernel witnesses and adjoint checks for the linear theory
    #[command(name = "linear-demo")]
    LinearDemo(CommonArgs),
    /// Plan a coupled-system reference and track it dynamically
    #[command(name = "coupled-demo")]
    CoupledDemo(CommonArgs),
    /// Two-sided weak/strong tracking demonstration on the network example
    #[command(name = "example00-demo")]
    Example00Demo(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Saturate(a) => ("saturate", a),
        Command::Synthesize(a) => ("synthesize", a),
        Command::Simulate(a) => ("simulate", a),
        Command::LinearDemo(a) => ("linear-demo", a),
        Command::CoupledDemo(a) => ("coupled-demo", a),
        Command::Example00Demo(a) => ("example00-demo", a),
    };
    match qtrack_cli::run_from_files(name, &args.config, &args.out, args.seed, args.grid_steps) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
