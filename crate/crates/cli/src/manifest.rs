//! Run manifests tying every artifact to the inputs that produced it.
//!
//! Each subcommand drops a `<artifact>.manifest.json` beside its main output:
//! the configuration it actually ran with, the seeds in play, SHA-256 stamps
//! of every file read or written, and coarse stage timings. Two runs can be
//! compared by diffing manifests instead of re-hashing trees by hand.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of one file at the moment a stage touched it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one subcommand run, written next to its primary artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn record_seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn stamp_input(&mut self, path: &Path) -> Result<()> {
        let stamp = stamp_file(path)?;
        self.inputs.push(stamp);
        Ok(())
    }

    pub fn stamp_output(&mut self, path: &Path) -> Result<()> {
        let stamp = stamp_file(path)?;
        self.outputs.push(stamp);
        Ok(())
    }

    pub fn record_timing(&mut self, stage: &str, elapsed: Duration) {
        self.timings_ms
            .insert(stage.to_string(), elapsed.as_secs_f64() * 1e3);
    }

    /// Writes the manifest to `<artifact>.manifest.json` and returns that path.
    pub fn write_beside(&self, artifact: &Path) -> Result<PathBuf> {
        let path = manifest_path(artifact);
        let file = File::create(&path)
            .with_context(|| format!("creating manifest {}", path.display()))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(path)
    }
}

/// Manifest path for an artifact, keeping the artifact's own extension
/// visible: `model.json` gets `model.json.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", artifact.display()))
}

/// SHA-256 of a file's bytes plus its length.
pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut file =
        File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

fn stamp_file(path: &Path) -> Result<FileStamp> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256,
        bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_match_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, b"abc").unwrap();
        let (hash, bytes) = sha256_file(&path).unwrap();
        assert_eq!(
            hash,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(bytes, 3);
    }

    #[test]
    fn manifest_round_trips_and_sits_beside_the_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("model.json");
        std::fs::write(&artifact, b"{}").unwrap();

        let mut manifest =
            RunManifest::new("train", serde_json::json!({ "epochs": 3 }));
        manifest.record_seed("split", 7);
        manifest.stamp_output(&artifact).unwrap();
        manifest.record_timing("train", Duration::from_millis(12));

        let path = manifest.write_beside(&artifact).unwrap();
        assert_eq!(path, dir.path().join("model.json.manifest.json"));

        let text = std::fs::read_to_string(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.outputs[0].bytes, 2);
    }
}
