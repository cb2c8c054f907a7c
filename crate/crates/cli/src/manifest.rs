//! `run.json`: per-stage record of config hash, seed, inputs, outputs and
//! timing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use chrono::{DateTime, Utc};
use orgclass::fsutil;
use serde::{Deserialize, Serialize};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// Collects a stage's record while it runs.
pub struct StageRun {
    name: String,
    record: StageRecord,
}

impl StageRun {
    pub fn start(name: &str, config_hash: Option<String>, seed: Option<u64>) -> Self {
        let now = Utc::now();
        Self {
            name: name.to_string(),
            record: StageRecord {
                config_hash,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                counts: BTreeMap::new(),
                started_at: now,
                finished_at: now,
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.record.inputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.record.outputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn count(&mut self, key: &str, value: usize) {
        self.record.counts.insert(key.to_string(), value);
    }

    /// Merges this stage into `dir/run.json`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.record.finished_at = Utc::now();
        let path = dir.join(RUN_FILE);
        let mut manifest: RunManifest = if path.is_file() {
            fsutil::read_json(&path)?
        } else {
            RunManifest::default()
        };
        manifest.stages.insert(self.name, self.record);
        std::fs::create_dir_all(dir)?;
        fsutil::write_json_pretty(&path, &manifest)?;
        Ok(())
    }
}

/// SHA-256 of a file, or of every file under a directory.
fn hash_path(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.sort();
        for f in files.iter().filter(|f| f.is_file()) {
            out.extend(hash_path(f)?);
        }
    } else if path.is_file() {
        let bytes = std::fs::read(path)?;
        out.insert(path.display().to_string(), fsutil::sha256_hex(&bytes));
    }
    Ok(out)
}
