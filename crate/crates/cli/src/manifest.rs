//! Run manifests: a JSON record written beside each output file with the
//! resolved configuration, seed, and tool version, so any run can be
//! reproduced exactly from its manifest.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved configuration after defaults.
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub duration_ms: u128,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            duration_ms: 0,
        }
    }
}

/// Manifest path for an output file: `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Write the manifest beside the primary output file.
pub fn write_beside(primary: &Path, manifest: &RunManifest) -> anyhow::Result<PathBuf> {
    let path = manifest_path(primary);
    let json = serde_json::to_string_pretty(manifest).context("serialize manifest")?;
    std::fs::write(&path, json.as_bytes())
        .with_context(|| format!("write manifest {}", path.display()))?;
    Ok(path)
}
