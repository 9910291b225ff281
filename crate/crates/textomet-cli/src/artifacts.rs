//! Artifact files under the output directory, and the manifest that lists
//! them with content hashes. On a stage failure, everything written so far
//! moves under `failed/`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use textomet::classify::sha256_hex;

pub struct ArtifactSet {
    out_dir: PathBuf,
    written: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    version: u32,
    seed: u64,
    artifacts: Vec<ManifestEntry>,
}

impl ArtifactSet {
    pub fn create(out_dir: &Path) -> Result<ArtifactSet> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(ArtifactSet { out_dir: out_dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    /// Hash every artifact written so far and store `manifest.json`.
    pub fn write_manifest(&mut self, seed: u64) -> Result<()> {
        let mut names = self.written.clone();
        names.sort();
        let artifacts = names
            .iter()
            .map(|name| {
                let bytes = fs::read(self.out_dir.join(name))?;
                Ok(ManifestEntry {
                    name: name.clone(),
                    bytes: bytes.len(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { version: 1, seed, artifacts };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        fs::write(self.out_dir.join("manifest.json"), json.as_bytes())
            .context("cannot write manifest.json")?;
        Ok(())
    }

    /// Move everything written so far under `failed/`, preserving names.
    pub fn quarantine(&self) -> Result<()> {
        if self.written.is_empty() {
            return Ok(());
        }
        let failed = self.out_dir.join("failed");
        fs::create_dir_all(&failed)?;
        for name in &self.written {
            let from = self.out_dir.join(name);
            let to = failed.join(name);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent)?;
            }
            if from.exists() {
                fs::rename(&from, &to)
                    .with_context(|| format!("cannot move {} to failed/", from.display()))?;
            }
        }
        Ok(())
    }
}
