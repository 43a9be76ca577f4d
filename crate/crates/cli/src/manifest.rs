use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hash of the effective config and seed offset; names the run directory.
pub fn config_hash<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<String> {
    let json = serde_json::to_string(config)?;
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(json.as_bytes());
    h.update(seed.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize, S: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: &'a str,
    pub seed_offset: u64,
    pub config: &'a C,
    pub files: Vec<String>,
    pub diverged: bool,
    pub summary: S,
}

/// Run directory plus the files written into it.
pub struct RunDir {
    pub path: PathBuf,
    pub files: Vec<String>,
}

impl RunDir {
    pub fn create(parent: &Path, command: &str, hash: &str) -> Result<Self> {
        let path = parent.join(format!("{command}-{}", &hash[..12]));
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path, files: Vec::new() })
    }

    /// Open `name` for writing and remember it for the manifest.
    pub fn file(&mut self, name: &str) -> Result<fs::File> {
        let p = self.path.join(name);
        self.files.push(name.to_string());
        fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    }

    pub fn finish<C: Serialize, S: Serialize>(self, manifest: Manifest<'_, C, S>) -> Result<PathBuf> {
        let m = Manifest { files: self.files, ..manifest };
        let p = self.path.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)?).with_context(|| format!("writing {}", p.display()))?;
        Ok(self.path)
    }
}
