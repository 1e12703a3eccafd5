use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config,
            inputs: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// `out.json` → `out.json.manifest.json`; a directory gets `manifest.json` inside.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}
