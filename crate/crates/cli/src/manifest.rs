//! Per-run `manifest` file: command, settings, input digests and timing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use locus_core::model_io::write_key_value;
use locus_core::LocusError;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<(String, String)>,
    started: u64,
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
fn now() -> u64 {
    if let Some(fixed) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return fixed;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(LocusError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// SHA-256 of a file, or of a directory's files in name order (each
/// contributing its name and contents).
pub fn digest_path(path: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            hasher.update(file.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(fs::read(&file).map_err(|e| io_err(&file, e))?);
        }
    } else {
        hasher.update(fs::read(path).map_err(|e| io_err(path, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            seed: None,
            config: Vec::new(),
            inputs: Vec::new(),
            started: now(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<&mut Self, CliError> {
        let digest = digest_path(path)?;
        self.inputs.push((label.to_string(), format!("{} sha256:{digest}", path.display())));
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut entries = vec![
            ("command".to_string(), self.command.clone()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        if let Some(seed) = self.seed {
            entries.push(("seed".into(), seed.to_string()));
        }
        entries.extend(self.config.iter().map(|(k, v)| (format!("config.{k}"), v.clone())));
        entries.extend(self.inputs.iter().map(|(k, v)| (format!("input.{k}"), v.clone())));
        entries.push(("started".into(), self.started.to_string()));
        entries.push(("finished".into(), now().to_string()));
        write_key_value(&dir.join(MANIFEST_FILE), &entries)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        fs::write(&path, b"abc").unwrap();
        assert_eq!(
            digest_path(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn directory_digest_depends_on_names_and_contents() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        fs::write(a.path().join("s1.csv"), "1").unwrap();
        fs::write(b.path().join("s2.csv"), "1").unwrap();
        assert_ne!(digest_path(a.path()).unwrap(), digest_path(b.path()).unwrap());
        fs::write(b.path().join("s2.csv"), "1").unwrap();
        let again = tempfile::tempdir().unwrap();
        fs::write(again.path().join("s1.csv"), "1").unwrap();
        assert_eq!(digest_path(a.path()).unwrap(), digest_path(again.path()).unwrap());
    }
}
