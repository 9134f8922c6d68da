//! Run manifests and content hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a serialisable value through canonical JSON (object keys sorted),
/// so the hash does not depend on field order in the source file.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// The full configuration used, so the run can be repeated from the
    /// manifest alone.
    pub config: serde_json::Value,
    /// Logical name to path.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seeds: Vec<u64>) -> Result<Self> {
        Ok(RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config_hash: canonical_hash(config)?,
            seeds,
            config: serde_json::to_value(config)?,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn record(&mut self, name: &str, path: &Path) {
        self.artifacts
            .insert(name.to_string(), path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
