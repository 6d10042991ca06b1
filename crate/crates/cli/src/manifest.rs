//! Run manifests: what was run, with which seeds, producing which files.
//! The manifest hash covers everything except the timestamp, so identical
//! runs yield identical hashes.

use crate::config::CliError;
use memoryscope::dynamics::ThicknessToTime;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the canonicalized (key-sorted) config JSON.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<ThicknessToTime>,
    pub outputs: Vec<OutputEntry>,
    pub manifest_hash: String,
    /// Unix seconds; excluded from the manifest hash.
    pub timestamp: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Hash a config file independent of key order and whitespace. serde_json
/// parses objects into sorted maps, so re-serializing canonicalizes.
pub fn config_hash(path: Option<&Path>) -> Result<String, CliError> {
    let canonical = match path {
        None => "null".to_string(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            value.to_string()
        }
    };
    Ok(sha256_hex(canonical.as_bytes()))
}

pub struct ManifestBuilder {
    command: String,
    config_hash: String,
    seeds: BTreeMap<String, u64>,
    window: Option<(f64, f64)>,
    calibration: Option<ThicknessToTime>,
    outputs: Vec<OutputEntry>,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(command: &str, config_hash: String, out_dir: &Path) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config_hash,
            seeds: BTreeMap::new(),
            window: None,
            calibration: None,
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn window(&mut self, window: Option<(f64, f64)>) {
        self.window = window;
    }

    pub fn calibration(&mut self, calibration: Option<ThicknessToTime>) {
        self.calibration = calibration;
    }

    /// Register an already-written output file.
    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Run(format!("cannot hash {}: {e}", path.display())))?;
        let rel = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.outputs.push(OutputEntry {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(mut self) -> Result<RunManifest, CliError> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let hashed = serde_json::json!({
            "tool": "memoryscope",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "window": self.window,
            "calibration": self.calibration,
            "outputs": self.outputs.iter().map(|o| (&o.path, &o.sha256)).collect::<Vec<_>>(),
        });
        let manifest_hash = sha256_hex(hashed.to_string().as_bytes());
        let manifest = RunManifest {
            tool: "memoryscope",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_hash: self.config_hash,
            seeds: self.seeds,
            window: self.window,
            calibration: self.calibration,
            outputs: self.outputs,
            manifest_hash,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Run(e.to_string()))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}
