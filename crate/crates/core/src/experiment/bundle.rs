//! Output directories whose files are listed, with content hashes, in a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::linalg::CMatrix;
use crate::mmio;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sole writer of a bundle directory; records a hash for every file it writes.
pub struct BundleWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        // stale files from an earlier run would not be covered by the new manifest
        for name in [MANIFEST, "failure.json"] {
            let p = dir.join(name);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        Ok(BundleWriter { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), sha256: digest(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_matrix(&mut self, name: &str, m: &CMatrix) -> Result<()> {
        self.write_bytes(name, mmio::to_string(m).as_bytes())
    }

    /// CSV produced by a `write_csv`-style callback.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes the manifest, embedding the file list into `meta` under `files`.
    pub fn finish(self, mut meta: serde_json::Value) -> Result<PathBuf> {
        let files = serde_json::to_value(&self.files)?;
        meta.as_object_mut()
            .ok_or_else(|| LabError::Config("manifest metadata must be an object".into()))?
            .insert("files".into(), files);
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleProblem {
    pub path: String,
    pub problem: String,
}

/// Re-hashes every file listed in the manifest.
pub fn verify_bundle(dir: &Path) -> Result<Vec<BundleProblem>> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let files: Vec<FileEntry> = serde_json::from_value(
        manifest
            .get("files")
            .cloned()
            .ok_or_else(|| LabError::Config("manifest has no file list".into()))?,
    )?;
    let mut problems = Vec::new();
    for f in files {
        match fs::read(dir.join(&f.path)) {
            Ok(bytes) if digest(&bytes) == f.sha256 => {}
            Ok(_) => problems.push(BundleProblem { path: f.path, problem: "hash mismatch".into() }),
            Err(e) => problems.push(BundleProblem { path: f.path, problem: format!("unreadable: {e}") }),
        }
    }
    Ok(problems)
}
