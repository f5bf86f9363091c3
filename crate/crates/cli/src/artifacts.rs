//! Output directory handling: atomic writes, `run.json`, and a
//! content-addressed stage cache.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, RunRecord};
use crate::error::CliError;

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Runtime(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Render with `f` into memory, then write atomically.
pub fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> rmcq_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `value`.
pub fn hash_of<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Hash of every file in `dir` (names and contents, sorted by name).
pub fn hash_dir(dir: &Path) -> Result<String, CliError> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update([0]);
        let bytes = fs::read(&p)?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Write `run.json` with the command line and the resolved config.
pub fn write_run_record(out: &Path, command: &str, config: &ExperimentConfig) -> Result<(), CliError> {
    let record = RunRecord {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
    };
    write_json(&out.join("run.json"), &record)
}

/// Stage results stored under `<root>/<stage>/<sha256(key)>.json`.
///
/// The full key is stored next to the value and compared on lookup, so a
/// changed config always misses.
#[derive(Clone, Debug)]
pub struct StageCache {
    root: Option<PathBuf>,
}

#[derive(Serialize, serde::Deserialize)]
struct CacheEntry<K, V> {
    key: K,
    value: V,
}

impl StageCache {
    pub fn new(root: PathBuf) -> Self {
        StageCache { root: Some(root) }
    }

    pub fn disabled() -> Self {
        StageCache { root: None }
    }

    pub fn path<K: Serialize>(&self, stage: &str, key: &K) -> Result<Option<PathBuf>, CliError> {
        match &self.root {
            Some(r) => Ok(Some(r.join(stage).join(format!("{}.json", hash_of(key)?)))),
            None => Ok(None),
        }
    }

    pub fn get_or_compute<K, V, F>(&self, stage: &str, key: &K, compute: F) -> Result<V, CliError>
    where
        K: Serialize + DeserializeOwned + PartialEq,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V, CliError>,
    {
        let Some(path) = self.path(stage, key)? else {
            return compute();
        };
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(entry) = serde_json::from_str::<CacheEntry<K, V>>(&text) {
                if &entry.key == key {
                    return Ok(entry.value);
                }
            }
        }
        let value = compute()?;
        let entry = CacheEntry { key, value: &value };
        write_atomic(&path, &serde_json::to_vec(&entry)?)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn cache_hits_only_on_equal_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path().to_path_buf());
        let calls = Cell::new(0);
        let run = |key: &str, v: u32| {
            cache
                .get_or_compute("s", &key.to_string(), || {
                    calls.set(calls.get() + 1);
                    Ok(v)
                })
                .unwrap()
        };
        assert_eq!(run("a", 1), 1);
        assert_eq!(run("a", 2), 1);
        assert_eq!(run("b", 3), 3);
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn cache_ignores_entries_with_other_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path().to_path_buf());
        let path = cache.path("s", &"a".to_string()).unwrap().unwrap();
        write_atomic(&path, br#"{"key":"b","value":7}"#).unwrap();
        let v: u32 = cache.get_or_compute("s", &"a".to_string(), || Ok(1)).unwrap();
        assert_eq!(v, 1);
    }

    #[test]
    fn dir_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("x"), b"1").unwrap();
        let a = hash_dir(dir.path()).unwrap();
        write_atomic(&dir.path().join("x"), b"2").unwrap();
        assert_ne!(a, hash_dir(dir.path()).unwrap());
    }
}
