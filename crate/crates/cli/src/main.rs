use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use netspde_cli::{configure_threads, execute, Command, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    AnalyzeSemigroup,
    Converge,
    ControlTournament,
    ValidateConfig,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::AnalyzeSemigroup => Command::AnalyzeSemigroup,
            Cmd::Converge => Command::Converge,
            Cmd::ControlTournament => Command::ControlTournament,
            Cmd::ValidateConfig => Command::ValidateConfig,
        }
    }
}

/// Stochastic diffusion on metric graphs with delayed dynamic boundary conditions.
#[derive(Debug, Parser)]
#[command(name = "netspde", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (not needed for validate-config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides sde.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides sde.n_paths.
    #[arg(long)]
    paths: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides { seed: args.seed, paths: args.paths };
    let result = configure_threads().and_then(|_| execute(args.command.into(), &args.config, args.out.as_deref(), overrides));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netspde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
