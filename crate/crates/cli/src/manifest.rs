//! Run manifests: every file-producing command writes one next to each
//! output, recording the resolved configuration, seed, timings, warnings, and
//! the digests of all outputs of the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use polya_forest::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Full resolved configuration of the run.
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    /// Wall time per stage, seconds.
    pub stage_wall_times: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputDigest>,
}

/// Builder that accumulates stages and warnings while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    master_seed: Option<u64>,
    started_at: String,
    start: Instant,
    stage_start: Instant,
    stages: Vec<(String, f64)>,
    warnings: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, master_seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            master_seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            start: Instant::now(),
            stage_start: Instant::now(),
            stages: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Close the current stage under `name`.
    pub fn stage(&mut self, name: &str) {
        self.stages
            .push((name.to_string(), self.stage_start.elapsed().as_secs_f64()));
        self.stage_start = Instant::now();
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Digest the outputs and write one manifest copy next to each of them.
    pub fn finalize(mut self, outputs: &[PathBuf]) -> Result<RunManifest> {
        self.stages
            .push(("total".to_string(), self.start.elapsed().as_secs_f64()));
        let digests = outputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            config: self.config,
            master_seed: self.master_seed,
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            stage_wall_times: self.stages,
            warnings: self.warnings,
            outputs: digests,
        };
        for path in outputs {
            let body = serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
            fs::write(manifest_path(path), body + "\n")
                .map_err(|e| Error::Data(format!("writing manifest: {e}")))?;
        }
        Ok(manifest)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn digest_file(path: &Path) -> Result<OutputDigest> {
    let bytes =
        fs::read(path).map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(OutputDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", hasher.finalize()),
        bytes: bytes.len() as u64,
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let body =
        fs::read_to_string(path).map_err(|e| Error::Data(format!("reading manifest: {e}")))?;
    serde_json::from_str(&body).map_err(|e| Error::Data(format!("parsing manifest: {e}")))
}
