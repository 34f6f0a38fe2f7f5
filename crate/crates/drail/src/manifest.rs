//! `run.json`: what produced an artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const FILE_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub subcommand: String,
    /// Crate versions of the binary and the core library.
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of the canonical (key-sorted, compact) JSON of `config`.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub workers: usize,
    pub started: String,
    pub finished: String,
}

/// Hex SHA-256 of the compact JSON encoding. `serde_json` maps keep keys
/// sorted, so equal configs hash equally.
pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("json value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn timestamp(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t).to_string()
}

pub struct Run {
    subcommand: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    workers: usize,
    started: SystemTime,
}

impl Run {
    pub fn start(subcommand: &str, config: serde_json::Value, workers: usize) -> Self {
        Self {
            subcommand: subcommand.into(),
            config,
            seeds: BTreeMap::new(),
            workers,
            started: SystemTime::now(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn finish(self) -> Manifest {
        let mut versions = BTreeMap::new();
        versions.insert("drail".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("drail-core".into(), drail_core::VERSION.into());
        Manifest {
            tool: "drail".into(),
            subcommand: self.subcommand,
            versions,
            config_sha256: config_hash(&self.config),
            config: self.config,
            seeds: self.seeds,
            workers: self.workers,
            started: timestamp(self.started),
            finished: timestamp(SystemTime::now()),
        }
    }
}

/// Where the manifest of an output goes: `<dir>/run.json` for a directory
/// output, `<file>.run.json` next to a file output.
pub fn path_for(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join(FILE_NAME)
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".run.json");
        out.with_file_name(name)
    }
}

pub fn write(manifest: &Manifest, path: &Path) -> Result<()> {
    crate::dataio::write_json(path, manifest)
}
