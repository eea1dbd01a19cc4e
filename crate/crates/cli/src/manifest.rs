use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run: what went in, what came out, and how long it took.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output path → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config: serde_json::to_value(config).expect("configs serialize"),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings: BTreeMap::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest
            .inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest
            .outputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.manifest.timings.insert(name.to_string(), seconds);
    }

    /// Adds the total wall time and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<PathBuf, CliError> {
        let total = self.started.elapsed().as_secs_f64();
        self.manifest.timings.insert("total_seconds".into(), total);
        write_json(path, &self.manifest)?;
        Ok(path.to_path_buf())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
