//! Machine-readable run manifests: every command records its parameters
//! and the digests of its inputs and outputs, so downstream commands can
//! verify upstream artifacts without recomputing them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    /// Flattened parameter snapshot, sorted by key.
    pub parameters: BTreeMap<String, String>,
    /// Input path (relative to the dataset root or out dir) -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the out dir) -> sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(format!("manifest_{command}.json"))
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(label.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Registers an already-written output file, keyed by its path relative
    /// to the out dir.
    pub fn output(&mut self, out_dir: &Path, path: &Path) -> Result<(), CliError> {
        let rel = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.outputs.insert(rel, sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = manifest_path(out_dir, &self.command);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Loads an upstream manifest and verifies every recorded output still
/// exists with a matching digest.
pub fn require_upstream(out_dir: &Path, command: &str) -> Result<Manifest, CliError> {
    let path = manifest_path(out_dir, command);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Upstream(format!(
            "missing upstream artifact: run the `{command}` command first ({} not found)",
            path.display()
        ))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Upstream(format!("corrupt manifest {}: {e}", path.display())))?;
    for (rel, digest) in &manifest.outputs {
        let file = out_dir.join(rel);
        let actual = sha256_file(&file).map_err(|_| {
            CliError::Upstream(format!("upstream output {rel} of `{command}` is missing"))
        })?;
        if &actual != digest {
            return Err(CliError::Upstream(format!(
                "upstream output {rel} of `{command}` changed since its manifest was written"
            )));
        }
    }
    Ok(manifest)
}
