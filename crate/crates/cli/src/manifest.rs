//! `run.json`: which files each subcommand produced under which config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use loadcast::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRun {
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub synth_seed: u64,
    /// Latest run of each subcommand under this config.
    pub commands: BTreeMap<String, CommandRun>,
}

/// Collects the outputs of one subcommand invocation.
pub struct Recorder {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    synth_seed: u64,
    outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Recorder {
    pub fn new(dir: &Path, command: &str, config_hash: &str, seed: u64, synth_seed: u64) -> Self {
        Recorder {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            synth_seed,
            outputs: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Serializes `value` as pretty JSON with a top-level `config_hash` key.
    pub fn write_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<()> {
        let path = path.into();
        let mut json = serde_json::to_value(value)?;
        match &mut json {
            serde_json::Value::Object(map) => {
                map.insert("config_hash".into(), self.config_hash.clone().into());
            }
            other => {
                let body = std::mem::take(other);
                *other = serde_json::json!({ "config_hash": self.config_hash, "data": body });
            }
        }
        std::fs::write(&path, serde_json::to_string_pretty(&json)?)
            .map_err(|e| Error::io(&path, e))?;
        self.record(path);
        Ok(())
    }

    /// Adds the config hash to a JSON object file written elsewhere.
    pub fn stamp_json(&mut self, path: impl Into<PathBuf>) -> Result<()> {
        let path = path.into();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        self.write_json(path, &value)
    }

    /// Merges this invocation into `run.json`. A manifest written under a
    /// different config is replaced.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        let mut manifest = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Manifest>(&text)
                .ok()
                .filter(|m| m.config_hash == self.config_hash),
            Err(_) => None,
        }
        .unwrap_or_else(|| Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            synth_seed: self.synth_seed,
            commands: BTreeMap::new(),
        });
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            let shown = p.strip_prefix(&self.dir).unwrap_or(p);
            outputs.push(OutputEntry {
                path: shown.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(p)?,
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        outputs.dedup_by(|a, b| a.path == b.path);
        manifest
            .commands
            .insert(self.command, CommandRun { outputs });
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
