use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written next to the artifacts of every run. Contains nothing that varies
/// between repeated runs of the same configuration (no timestamps, thread
/// counts or wall-clock timings).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub inputs: Vec<ArtifactRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            config_sha256: config_hash(config),
            config: config.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("metric serializes");
        self.metrics.insert(key.into(), v);
    }

    pub fn add_artifact(&mut self, out_dir: &Path, name: &str) -> Result<(), PipelineError> {
        self.artifacts.push(record(&out_dir.join(name), name)?);
        Ok(())
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.inputs.push(record(path, &path.display().to_string())?);
        Ok(())
    }

    /// Writes `manifest.<command>.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<std::path::PathBuf, PipelineError> {
        let path = out_dir.join(format!("manifest.{}.json", self.command));
        crate::io::write_json(&path, self)?;
        Ok(path)
    }
}

pub fn config_hash(config: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn file_sha256(path: &Path) -> Result<(u64, String), PipelineError> {
    let mut f = std::fs::File::open(path).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

fn record(path: &Path, name: &str) -> Result<ArtifactRecord, PipelineError> {
    let (bytes, sha256) = file_sha256(path)?;
    Ok(ArtifactRecord {
        path: name.into(),
        bytes,
        sha256,
    })
}
