//! Run manifests: enough metadata to reproduce a run in replay mode.
//!
//! Every CLI run writes one next to its primary output. Replaying with the
//! same inputs, seed, and cassette reproduces the output hashes; the
//! timestamp is the only wall-clock field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    /// Effective settings after config-file and flag merging.
    pub config: serde_json::Value,
    pub seed: u64,
    pub cassette_hash: Option<String>,
    pub input_hashes: BTreeMap<String, String>,
    pub output_hashes: BTreeMap<String, String>,
    pub timestamp: String,
}

pub fn file_sha256(path: impl AsRef<Path>) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            config,
            seed,
            cassette_hash: None,
            input_hashes: BTreeMap::new(),
            output_hashes: BTreeMap::new(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn record_cassette(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        self.cassette_hash = Some(file_sha256(path)?);
        Ok(())
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let p = path.as_ref();
        self.input_hashes
            .insert(p.display().to_string(), file_sha256(p)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let p = path.as_ref();
        self.output_hashes
            .insert(p.display().to_string(), file_sha256(p)?);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
    }
}
