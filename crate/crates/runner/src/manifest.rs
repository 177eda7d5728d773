//! Run manifest: config hash, versions and a checksum of every output file.
//! Contains no timestamps, so identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::config::ExperimentConfig;
use crate::RunResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub runner_version: String,
    pub verb: String,
    pub config_hash: String,
    pub seed: u64,
    pub stalled: bool,
    pub summary: serde_json::Value,
    /// Relative path to SHA-256, sorted.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    /// Hashes every file below `dir` (except an existing manifest).
    pub fn collect(
        dir: &Path,
        verb: &str,
        config: &ExperimentConfig,
        stalled: bool,
        summary: serde_json::Value,
    ) -> RunResult<Self> {
        let mut files = BTreeMap::new();
        walk(dir, &mut files)?;
        Ok(Self {
            format: 1,
            runner_version: env!("CARGO_PKG_VERSION").to_string(),
            verb: verb.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            stalled,
            summary,
            files,
        })
    }

    pub fn write(&self, dir: &Path) -> RunResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| crate::RunError::Output(e.to_string()))
    }

    pub fn matches(&self, config: &ExperimentConfig) -> bool {
        self.config_hash == config.hash()
    }
}

fn walk(root: &Path, out: &mut BTreeMap<String, String>) -> RunResult<()> {
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| crate::RunError::Output(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("below root");
        let rel = rel.to_string_lossy().replace('\\', "/");
        if rel == MANIFEST_FILE {
            continue;
        }
        let bytes = std::fs::read(entry.path())?;
        out.insert(rel, format!("{:x}", Sha256::digest(&bytes)));
    }
    Ok(())
}
