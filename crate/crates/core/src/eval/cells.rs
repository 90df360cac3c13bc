//! Deterministic, resumable execution of independent grid cells.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(setting, replication)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub setting: usize,
    pub replication: usize,
}

impl CellKey {
    pub fn new(setting: usize, replication: usize) -> Self {
        Self {
            setting,
            replication,
        }
    }

    /// Directory-friendly label, e.g. `s02_r003`.
    pub fn label(&self) -> String {
        format!("s{:02}_r{:03}", self.setting, self.replication)
    }
}

/// Write `contents` next to `path` and rename it into place, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Per-cell result files under one directory.
#[derive(Debug, Clone)]
pub struct CellCache {
    dir: PathBuf,
    prefix: String,
}

impl CellCache {
    pub fn new(dir: impl Into<PathBuf>, prefix: &str) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            prefix: prefix.to_owned(),
        })
    }

    pub fn path(&self, key: CellKey) -> PathBuf {
        self.dir.join(format!("{}_{}.json", self.prefix, key.label()))
    }

    pub fn load<T: DeserializeOwned>(&self, key: CellKey) -> Option<T> {
        let path = self.path(key);
        path.exists().then(|| read_json(&path).ok()).flatten()
    }

    pub fn store<T: Serialize>(&self, key: CellKey, value: &T) -> Result<()> {
        write_json(&self.path(key), value)
    }
}

/// Run `work` for every key on a pool of `threads` workers (machine
/// parallelism when `None`) and return results in key order. With a cache,
/// keys listed in `completed` whose files load are reused, fresh results
/// are stored, and `on_done` sees the growing completed set after each
/// cell so callers can persist it.
pub fn run_cells<T, F, D>(
    keys: &[CellKey],
    threads: Option<usize>,
    cache: Option<&CellCache>,
    completed: &BTreeSet<CellKey>,
    work: F,
    on_done: D,
) -> Result<Vec<T>>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(CellKey) -> Result<T> + Sync,
    D: Fn(&BTreeSet<CellKey>) -> Result<()> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let done = Mutex::new(completed.clone());
    pool.install(|| {
        keys.par_iter()
            .map(|&key| {
                if let Some(cache) = cache {
                    if completed.contains(&key) {
                        if let Some(v) = cache.load(key) {
                            return Ok(v);
                        }
                    }
                }
                let value = work(key)?;
                if let Some(cache) = cache {
                    cache.store(key, &value)?;
                    let mut set = done.lock().unwrap_or_else(|p| p.into_inner());
                    set.insert(key);
                    on_done(&set)?;
                }
                Ok(value)
            })
            .collect()
    })
}
