//! Append-only store of successful repairs.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::vector::FeatureVector;
use super::KbError;
use crate::detector::UbKind;
use crate::fast::RepairStep;
use crate::feedback::EvalTriplet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub vector: FeatureVector,
    pub ub_kind: UbKind,
    /// Steps address regions by reference (`R1`, ...), never by span.
    pub solution: Vec<RepairStep>,
    pub triplet: EvalTriplet,
    pub created: u64,
}

/// Entries in insertion order, optionally mirrored to a JSONL file.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    path: Option<PathBuf>,
    entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, which may not exist yet.
    pub fn open(path: &Path) -> Result<Self, KbError> {
        let mut kb = Self { path: Some(path.to_path_buf()), entries: Vec::new() };
        if path.is_file() {
            let file = File::open(path).map_err(|e| storage(path, e))?;
            file.lock_shared().map_err(|e| storage(path, e))?;
            let text = fs::read_to_string(path).map_err(|e| storage(path, e))?;
            drop(file);
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: KnowledgeEntry = serde_json::from_str(line)
                    .map_err(|e| KbError::Storage(format!("{}:{}: {e}", path.display(), idx + 1)))?;
                kb.entries.push(entry);
            }
        }
        Ok(kb)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    /// A copy detached from the backing file; inserts stay in memory.
    pub fn frozen(&self) -> Self {
        Self { path: None, entries: self.entries.clone() }
    }

    /// Stores a repair that passed detection; failing repairs are rejected.
    pub fn insert(&mut self, entry: KnowledgeEntry) -> Result<(), KbError> {
        if !entry.triplet.accuracy {
            return Err(KbError::Rejected);
        }
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).expect("knowledge entry serializes");
            append_line(path, &line).map_err(|e| storage(path, e))?;
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Top `k` entries by cosine similarity to `query`, newest first on ties.
    pub fn search(&self, query: &FeatureVector, k: usize) -> Vec<(&KnowledgeEntry, f64)> {
        if query.is_zero() {
            return Vec::new();
        }
        let mut hits: Vec<(usize, f64)> =
            self.entries.iter().enumerate().map(|(i, e)| (i, query.cosine(&e.vector))).collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
        hits.into_iter().take(k).map(|(i, s)| (&self.entries[i], s)).collect()
    }
}

fn storage(path: &Path, e: std::io::Error) -> KbError {
    KbError::Storage(format!("{}: {e}", path.display()))
}

/// Appends one line under an exclusive lock.
pub(crate) fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.lock()?;
    let result = writeln!(file, "{line}").and_then(|_| file.flush());
    file.unlock()?;
    result
}
