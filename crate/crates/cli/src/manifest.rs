//! Per-command `manifest.json`: config hash, seed and a sha256 per artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Hash of the config file bytes, or of the command's canonical
    /// parameters when no config file was given.
    pub config_sha256: String,
    pub master_seed: Option<u64>,
    pub parameters: serde_json::Value,
    /// File name (relative to the output directory) to content hash.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

/// Collects artifacts as they are written.
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn new(
        dir: &Path,
        command: &str,
        config_bytes: Option<&[u8]>,
        master_seed: Option<u64>,
        parameters: serde_json::Value,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let config_sha256 = match config_bytes {
            Some(b) => sha256_hex(b),
            None => sha256_hex(parameters.to_string().as_bytes()),
        };
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config_sha256,
                master_seed,
                parameters,
                artifacts: BTreeMap::new(),
                created_at: None,
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.artifacts.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(mut self, timestamp: bool) -> Result<Manifest, CliError> {
        if timestamp {
            self.manifest.created_at = Some(chrono::Utc::now().to_rfc3339());
        }
        let m = self.manifest;
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| CliError::internal(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(m)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
