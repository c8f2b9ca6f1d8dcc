use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shapeopt::commands::{run, Command};
use shapeopt::config::RunConfig;

/// Planar isogeometric shape optimization.
#[derive(Parser)]
#[command(name = "shapeopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the domain parameterization of the starting design.
    Parameterize(Args),
    /// Solve the state equation on the starting design.
    Solve(Args),
    /// Run the optimizer.
    Optimize(Args),
    /// Compare adjoint gradients against central differences.
    CheckGradient(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir` of the configuration.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Parameterize(a) => (Command::Parameterize, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::CheckGradient(a) => (Command::CheckGradient, a),
    };
    let result = RunConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(o) = args.output {
            cfg.output_dir = o;
        }
        run(command, &cfg)
    });
    match result {
        Ok(art) => {
            log::info!("wrote {} files to {}", art.files.len(), art.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
