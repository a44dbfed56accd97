//! Run manifests: every run directory carries one `manifest.json` listing,
//! per pipeline step, the resolved configuration and the SHA-256 digest of
//! every input and output file. Re-running the same step replaces its entry,
//! so identical command sequences produce byte-identical manifests.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub resolved: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub steps: Vec<StepRecord>,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read {} for digesting", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Insert or replace the record of `step.command` and write the manifest.
pub fn record_step(dir: &Path, step: StepRecord) -> Result<()> {
    let path = dir.join(MANIFEST_NAME);
    let mut manifest: Manifest = if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).unwrap_or_default()
    } else {
        Manifest::default()
    };
    manifest.steps.retain(|s| s.command != step.command);
    manifest.steps.push(step);
    manifest.steps.sort_by(|a, b| a.command.cmp(&b.command));
    let file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rerunning_a_step_replaces_it() {
        let dir = tempfile::tempdir().unwrap();
        let step = |seed| StepRecord {
            command: "generate".to_string(),
            version: "0".to_string(),
            master_seed: seed,
            resolved: serde_json::json!({}),
            inputs: vec![],
            outputs: vec![],
        };
        record_step(dir.path(), step(1)).unwrap();
        record_step(dir.path(), step(2)).unwrap();
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.steps.len(), 1);
        assert_eq!(manifest.steps[0].master_seed, 2);
    }

    #[test]
    fn digests_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        std::fs::write(&path, b"hello").unwrap();
        let a = digest_file(&path).unwrap();
        let b = digest_file(&path).unwrap();
        assert_eq!(a.sha256, b.sha256);
        assert_eq!(a.name, "f.txt");
    }
}
