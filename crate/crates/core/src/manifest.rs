//! Per-stage run manifests: the record of inputs, seeds, config digests,
//! and counts that makes a pipeline run reproducible.
//!
//! Manifests deliberately carry no timestamps; two runs of the same config
//! over the same inputs produce byte-identical manifest files. Stage N
//! records the digest of stage N-1's manifest, chaining a run end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::record::DatasetStats;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Write bytes atomically (temp file + rename) and return their digest.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<String> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(sha256_hex(bytes))
}

/// Manifest of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub dataset_name: String,
    pub stage: String,
    pub stage_version: String,
    pub pipeline_seed: u64,
    /// Digest of the config file bytes driving this run.
    pub config_digest: String,
    /// Digests of this stage's input artifacts, keyed by artifact name.
    pub input_digests: BTreeMap<String, String>,
    /// Digests of the artifacts this stage wrote; every artifact file in a
    /// run directory is referenced by exactly one stage manifest.
    pub output_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_manifest_digest: Option<String>,
    pub record_count: u64,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<DatasetStats>,
    /// Free-form policy notes (line counting rules, reconstructed defaults,
    /// required-but-defaultless settings).
    pub notes: BTreeMap<String, String>,
}

pub const STAGE_VERSION: &str = "1";

impl StageManifest {
    pub fn new(
        dataset_name: &str,
        stage: &str,
        pipeline_seed: u64,
        config_digest: &str,
        prev_manifest_digest: Option<String>,
    ) -> StageManifest {
        StageManifest {
            dataset_name: dataset_name.to_string(),
            stage: stage.to_string(),
            stage_version: STAGE_VERSION.to_string(),
            pipeline_seed,
            config_digest: config_digest.to_string(),
            input_digests: BTreeMap::new(),
            output_digests: BTreeMap::new(),
            prev_manifest_digest,
            record_count: 0,
            counts: BTreeMap::new(),
            stats: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, digest: String) -> &mut Self {
        self.input_digests.insert(name.to_string(), digest);
        self
    }

    /// Record an output artifact by digesting the file just written.
    pub fn output(&mut self, name: &str, path: &Path) -> Result<&mut Self> {
        self.output_digests
            .insert(name.to_string(), digest_file(path)?);
        Ok(self)
    }

    pub fn count(&mut self, name: &str, value: u64) -> &mut Self {
        self.counts.insert(name.to_string(), value);
        self
    }

    pub fn note(&mut self, key: &str, value: &str) -> &mut Self {
        self.notes.insert(key.to_string(), value.to_string());
        self
    }

    /// Serialize to `path` and return the manifest digest.
    pub fn write(&self, path: &Path) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<StageManifest> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Top-level manifest tying a whole run together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_name: String,
    pub record_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<DatasetStats>,
    pub pipeline_seed: u64,
    pub config_digest: String,
    pub stage_versions: BTreeMap<String, String>,
    /// Executed stages in order with their manifest digests.
    pub stages: Vec<StageRef>,
    /// Declared trainer hyperparameters, echoed so defaultless settings
    /// (weight decay, clip threshold) are on the record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<crate::trainmath::OptimizerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRef {
    pub stage: String,
    pub manifest_digest: String,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

/// Derive a named sub-stream seed from the pipeline seed. Every stage draws
/// its randomness from one of these, never from the top-level seed directly.
pub fn stage_seed(pipeline_seed: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(pipeline_seed.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let build = || {
            let mut m = StageManifest::new("mini", "ingest", 42, "cfgdigest", None);
            m.count("files", 200).count("repos", 8);
            m.note("line_counting", "physical lines, blank lines included");
            m.input("files", "abc".to_string());
            m
        };
        let d1 = build().write(&dir.path().join("a.json")).unwrap();
        let d2 = build().write(&dir.path().join("b.json")).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(
            fs::read(dir.path().join("a.json")).unwrap(),
            fs::read(dir.path().join("b.json")).unwrap()
        );
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = StageManifest::new("mini", "dedup", 7, "d", Some("prev".to_string()));
        m.count("clusters", 12);
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        assert_eq!(StageManifest::read(&path).unwrap(), m);
    }

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        let a = stage_seed(42, "dedup");
        assert_eq!(a, stage_seed(42, "dedup"));
        assert_ne!(a, stage_seed(42, "filter"));
        assert_ne!(a, stage_seed(43, "dedup"));
    }
}
