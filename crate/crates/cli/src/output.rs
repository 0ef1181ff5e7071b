//! Atomic output staging and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Output;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub n_paths: usize,
    pub wall_clock_seconds: f64,
    /// File name to SHA-256 of its contents, in name order.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io(context: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Output(format!("{context}: {e}"))
}

/// Writes every output and the manifest into a staging directory inside
/// `out_dir`, then renames them into place.
pub fn write_outputs(out_dir: &Path, outputs: &[Output], manifest: &RunManifest) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io(&out_dir.display().to_string()))?;
    let stage = tempfile::Builder::new().prefix(".netspde-stage-").tempdir_in(out_dir).map_err(io("staging directory"))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Output(e.to_string()))? + "\n";
    let files: Vec<(&str, &[u8])> =
        outputs.iter().map(|o| (o.name, o.contents.as_bytes())).chain([(MANIFEST, json.as_bytes())]).collect();
    for (name, bytes) in &files {
        fs::write(stage.path().join(name), bytes).map_err(io(name))?;
    }
    // the manifest moves last, so its presence marks a complete run
    for (name, _) in &files {
        fs::rename(stage.path().join(name), out_dir.join(name)).map_err(io(name))?;
    }
    Ok(())
}
