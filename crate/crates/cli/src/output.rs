//! Output directories with atomic writes and a hashed manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable naming the directory that relative output paths are
/// resolved against.
pub const OUTPUT_ROOT_VAR: &str = "LANGEVIN_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// `path` itself when absolute, otherwise `path` below [`output_root`].
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        output_root().join(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<FileRecord>,
}

/// A directory being filled by one command; every file written through it is
/// listed with its hash in `manifest.json`.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileRecord>,
    seeds: BTreeMap<String, u64>,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(OutputDir {
            dir,
            files: Vec::new(),
            seeds: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes `bytes` to `name` (relative, `/`-separated) inside the directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        let record = FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        match self.files.iter_mut().find(|f| f.path == name) {
            Some(f) => *f = record,
            None => self.files.push(record),
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let bytes = to_json(value)?;
        self.write(name, &bytes)
    }

    pub fn seed(&mut self, label: impl Into<String>, seed: u64) {
        self.seeds.insert(label.into(), seed);
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?,
            seeds: self.seeds,
            files: self.files,
        };
        write_atomic(&self.dir.join("manifest.json"), &to_json(&manifest)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content_and_manifest_hashes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path().join("run")).unwrap();
        out.write("a/b.txt", b"first").unwrap();
        out.write("a/b.txt", b"abc").unwrap();
        assert_eq!(std::fs::read(tmp.path().join("run/a/b.txt")).unwrap(), b"abc");
        out.seed("replicate_0", 7);
        let m = out.finish("test", &serde_json::json!({"k": 1})).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.files[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let text = std::fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap();
        assert!(text.contains("\"replicate_0\": 7"));
        // no stray temporary files
        let names: Vec<_> = std::fs::read_dir(tmp.path().join("run/a")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
