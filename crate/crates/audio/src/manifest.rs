//! Per-run record of configuration, seeds and file checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&std::fs::read(path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_utc: String,
    pub wall_clock_secs: f64,
}

/// Collects a manifest while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_owned(),
                argv: std::env::args().collect(),
                tool_version: env!("CARGO_PKG_VERSION").to_owned(),
                config,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                wall_clock_secs: 0.0,
            },
            start: Instant::now(),
        }
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.manifest.config = config;
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_owned(), seed);
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Writes `manifest_{command}_{timestamp}.json` into `dir`.
    pub fn finish(mut self, dir: &Path, timestamp: &str) -> std::io::Result<PathBuf> {
        self.manifest.wall_clock_secs = self.start.elapsed().as_secs_f64();
        let path = dir.join(format!("manifest_{}_{timestamp}.json", self.manifest.command));
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
