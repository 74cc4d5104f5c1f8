//! Output directories and the manifest that describes how they were made.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the effective configuration as serialized JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }

    pub fn input(&self, role: &str) -> Option<&InputFile> {
        self.inputs.iter().find(|i| i.role == role)
    }

    /// Fails if any recorded input has changed since the run.
    pub fn verify_inputs(&self) -> Result<()> {
        for i in &self.inputs {
            let now = sha256_file(&i.path)?;
            if now != i.sha256 {
                anyhow::bail!("input '{}' ({}) changed since the run", i.role, i.path.display());
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects outputs of one command and writes the manifest when done.
pub struct Run {
    dir: PathBuf,
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<InputFile>,
    outputs: BTreeSet<String>,
    started: u64,
}

impl Run {
    pub fn start<C: Serialize>(dir: &Path, command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: BTreeSet::new(),
            started: now_unix(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(InputFile {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.insert(name.into());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Registers every file already present under `rel`.
    pub fn record_dir(&mut self, rel: &str) -> Result<()> {
        let mut stack = vec![PathBuf::from(rel)];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(self.dir.join(&d))? {
                let entry = entry?;
                let name = d.join(entry.file_name());
                if entry.file_type()?.is_dir() {
                    stack.push(name);
                } else {
                    self.outputs.insert(name.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest> {
        let config_bytes = serde_json::to_vec(&self.config)?;
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            config_hash: sha256_hex(&config_bytes),
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs.into_iter().collect(),
            started_unix: self.started,
            finished_unix: now_unix(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}
