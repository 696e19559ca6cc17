use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Collects provenance while a command runs, then writes `manifest.json`.
pub struct Recorder {
    started: Instant,
    manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Recorder {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                toolkit_version: env!("CARGO_PKG_VERSION").into(),
                config_path: None,
                config_sha256: None,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                wall_time_s: 0.0,
            },
        }
    }

    pub fn config(&mut self, path: Option<&Path>) -> Result<()> {
        if let Some(p) = path {
            self.manifest.config_path = Some(p.display().to_string());
            self.manifest.config_sha256 = Some(sha256_file(p)?);
        }
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(digest(path)?);
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
