use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::nn::{read_snapshot, write_snapshot, RecModel};

/// Immutable snapshots keyed by lineage name and exact time, kept in memory
/// and optionally mirrored to `<dir>/<lineage>@<time>.snap`.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    dir: Option<PathBuf>,
    entries: BTreeMap<(String, i64), RecModel>,
}

impl SnapshotStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir: Some(dir), entries: BTreeMap::new() })
    }

    fn path(&self, lineage: &str, time: i64) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{lineage}@{time}.snap")))
    }

    pub fn insert(&mut self, lineage: &str, time: i64, model: &RecModel) -> Result<()> {
        let key = (lineage.to_string(), time);
        if self.entries.contains_key(&key) {
            return Err(Error::State(format!("snapshot {lineage}@{time} already written")));
        }
        if let Some(path) = self.path(lineage, time) {
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_snapshot(BufWriter::new(f), model)?;
        }
        let mut stored = model.clone();
        stored.clear_gradients();
        self.entries.insert(key, stored);
        Ok(())
    }

    /// Exact-time lookup; falls back to the mirrored file if present.
    pub fn get(&self, lineage: &str, time: i64) -> Result<RecModel> {
        if let Some(m) = self.entries.get(&(lineage.to_string(), time)) {
            return Ok(m.clone());
        }
        match self.path(lineage, time) {
            Some(path) if path.exists() => {
                let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
                read_snapshot(BufReader::new(f))
            }
            _ => Err(Error::State(format!("no snapshot {lineage}@{time}"))),
        }
    }

    pub fn times(&self, lineage: &str) -> Vec<i64> {
        self.entries.keys().filter(|(l, _)| l == lineage).map(|&(_, t)| t).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
