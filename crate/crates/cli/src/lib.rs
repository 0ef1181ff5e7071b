//! Config parsing, experiment dispatch and deterministic output for the
//! `netspde` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use commands::{Command, Output};
pub use error::CliError;
pub use experiment::{build, Experiment, Overrides};

/// Loads and validates a config file.
pub fn load_experiment(config_path: &Path, overrides: Overrides) -> Result<(Experiment, String), CliError> {
    let (cfg, text) = config::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    Ok((build(cfg, base, overrides)?, text))
}

/// Runs `cmd` and, except for `validate-config`, writes its outputs and
/// manifest into `out_dir`.
pub fn execute(cmd: Command, config_path: &Path, out_dir: Option<&Path>, overrides: Overrides) -> Result<(), CliError> {
    let started = Instant::now();
    let (exp, text) = load_experiment(config_path, overrides)?;
    let outputs = commands::run(cmd, &exp)?;
    if cmd == Command::ValidateConfig {
        return Ok(());
    }
    let out_dir = out_dir.ok_or_else(|| CliError::Config(format!("{} needs --out <dir>", cmd.name())))?;
    let manifest = output::RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        config_sha256: output::sha256_hex(text.as_bytes()),
        master_seed: exp.master_seed(),
        n_paths: exp.n_paths(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.iter().map(|o| (o.name.to_string(), output::sha256_hex(o.contents.as_bytes()))).collect(),
    };
    output::write_outputs(out_dir, &outputs, &manifest)
}

/// Caps the rayon pool from `NETSPDE_THREADS` (unset or 0: all cores).
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("NETSPDE_THREADS") else {
        return Ok(());
    };
    let n: usize =
        value.trim().parse().map_err(|_| CliError::Config(format!("NETSPDE_THREADS must be an integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}
