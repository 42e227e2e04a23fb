//! Dataset, cache, bank and artifact files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pathbank_core::bank::BankError;
use pathbank_core::pipeline::CategoryCache;
use pathbank_core::{Bank, Embedder, Question};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Bank { path: PathBuf, source: BankError },
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Fs { path: path.into(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Fs { path: dir.into(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::Fs { path: path.into(), source })
}

/// Questions as JSON Lines or as one JSON array.
pub fn parse_questions(path: &Path, text: &str) -> Result<Vec<Question>, IoError> {
    let format =
        |line: usize, e: serde_json::Error| IoError::Format { path: path.into(), line, message: e.to_string() };
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| format(e.line(), e));
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| format(i + 1, e))?);
        }
    }
    Ok(out)
}

pub fn read_questions(path: &Path) -> Result<Vec<Question>, IoError> {
    parse_questions(path, &read_text(path)?)
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    category: String,
    intent: String,
}

/// Category cache file: `{ "<id>": {"category": ..., "intent": ...} }`.
pub fn read_cache(path: &Path) -> Result<CategoryCache, IoError> {
    let entries: BTreeMap<String, CacheEntry> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| IoError::Format { path: path.into(), line: e.line(), message: e.to_string() })?;
    Ok(entries.into_iter().map(|(id, e)| (id, (e.category, e.intent))).collect())
}

pub fn cache_json(cache: &CategoryCache) -> String {
    let entries: BTreeMap<&String, CacheEntry> =
        cache.iter().map(|(id, (c, t))| (id, CacheEntry { category: c.clone(), intent: t.clone() })).collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("cache serializes");
    s.push('\n');
    s
}

pub fn pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

pub fn save_bank(path: &Path, bank: &Bank) -> Result<(), IoError> {
    let mut text = bank.to_json();
    text.push('\n');
    write_text(path, &text)
}

pub fn load_bank<E: Embedder + ?Sized>(path: &Path, embedder: &E, force: bool) -> Result<Bank, IoError> {
    Bank::from_json(&read_text(path)?, embedder, force).map_err(|source| IoError::Bank { path: path.into(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub created_unix: u64,
    /// Effective configuration of the run.
    pub config: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

/// Output directory that records every file it writes.
pub struct OutDir {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(root).map_err(|source| IoError::Fs { path: root.into(), source })?;
        Ok(Self { root: root.into(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, IoError> {
        let path = self.path(name);
        write_text(&path, text)?;
        self.files.retain(|f| f.path != name);
        self.files.push(ManifestEntry {
            path: name.into(),
            bytes: text.len() as u64,
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(path)
    }

    /// Writes `manifest.json` listing the files in the order written.
    pub fn finish(self, command: &str, created_unix: u64, config: serde_json::Value) -> Result<Manifest, IoError> {
        let manifest = Manifest { command: command.into(), created_unix, config, files: self.files };
        write_text(&self.root.join("manifest.json"), &pretty_json(&manifest))?;
        Ok(manifest)
    }
}
