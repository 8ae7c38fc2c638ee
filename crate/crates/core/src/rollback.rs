//! Snapshots of the working copy and reset-to-best rollback.
//!
//! Snapshot `i` holds the sources after thought `i` (0 is the baseline).
//! When the error trace diverges the working copy is restored to the
//! snapshot with the fewest errors, preferring the most recent one, instead
//! of the baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::WorkingCopy;

#[derive(Debug, Error)]
pub enum RollbackError {
    #[error("snapshot {0} already recorded")]
    Duplicate(usize),
    #[error("no snapshot {0}")]
    Missing(usize),
    #[error("snapshot storage failed: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub index: usize,
    pub files: BTreeMap<PathBuf, String>,
    pub error_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollbackStats {
    /// Rollbacks performed.
    pub rollback_count: usize,
    /// Thoughts undone by the most recent rollback.
    pub thoughts_since_snapshot: usize,
    pub discarded_thoughts: usize,
}

/// Index of a minimum in `counts`, taking the last one on ties.
pub fn select_rollback_target(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
        .map_or(0, |(i, _)| i)
}

/// When to abandon the current line of thoughts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollbackTrigger {
    pub window: usize,
    pub factor: f64,
}

impl Default for RollbackTrigger {
    fn default() -> Self {
        Self { window: 3, factor: 2.0 }
    }
}

impl RollbackTrigger {
    /// True when the last `window` counts strictly increase or the latest
    /// count exceeds `factor` times the global minimum.
    pub fn fires(&self, counts: &[usize]) -> bool {
        let Some(&latest) = counts.last() else { return false };
        let rising = self.window >= 2
            && counts.len() >= self.window
            && counts[counts.len() - self.window..].windows(2).all(|w| w[0] < w[1]);
        let min = counts.iter().copied().min().unwrap_or(latest);
        rising || latest as f64 > self.factor * min as f64
    }
}

/// Where a rollback lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestorePolicy {
    /// Fewest errors, most recent on ties.
    Adaptive,
    /// Always the baseline.
    Baseline,
}

/// Replays a fixed error trace under `trigger`, rolling back with `policy`
/// whenever it fires, and returns the accumulated statistics.
pub fn simulate(counts: &[usize], trigger: &RollbackTrigger, policy: RestorePolicy) -> RollbackStats {
    let mut stats = RollbackStats::default();
    for current in 1..counts.len() {
        let prefix = &counts[..=current];
        if !trigger.fires(prefix) {
            continue;
        }
        let target = match policy {
            RestorePolicy::Adaptive => select_rollback_target(prefix),
            RestorePolicy::Baseline => 0,
        };
        if target < current {
            stats.rollback_count += 1;
            stats.thoughts_since_snapshot = current - target;
            stats.discarded_thoughts += current - target;
        }
    }
    stats
}

/// Per-session snapshot store, mirrored to `snapshots/<index>/` when a directory is given.
#[derive(Debug)]
pub struct SnapshotStore {
    dir: Option<PathBuf>,
    snapshots: BTreeMap<usize, Snapshot>,
    stats: RollbackStats,
}

impl SnapshotStore {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, snapshots: BTreeMap::new(), stats: RollbackStats::default() }
    }

    pub fn record(
        &mut self,
        index: usize,
        files: BTreeMap<PathBuf, String>,
        error_count: usize,
    ) -> Result<&Snapshot, RollbackError> {
        if self.snapshots.contains_key(&index) {
            return Err(RollbackError::Duplicate(index));
        }
        if let Some(dir) = &self.dir {
            persist(&dir.join(index.to_string()), &files, error_count)
                .map_err(|e| RollbackError::Storage(e.to_string()))?;
        }
        Ok(self.snapshots.entry(index).or_insert(Snapshot { index, files, error_count }))
    }

    pub fn get(&self, index: usize) -> Option<&Snapshot> {
        self.snapshots.get(&index)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// The best stored snapshot (fewest errors, most recent on ties).
    pub fn best(&self) -> Option<&Snapshot> {
        self.snapshots.values().min_by(|a, b| a.error_count.cmp(&b.error_count).then(b.index.cmp(&a.index)))
    }

    pub fn stats(&self) -> RollbackStats {
        self.stats
    }

    /// Writes snapshot `target` into `copy`. `current` is the index of the
    /// state being abandoned.
    pub fn restore(&mut self, target: usize, current: usize, copy: &WorkingCopy) -> Result<(), RollbackError> {
        let snap = self.snapshots.get(&target).ok_or(RollbackError::Missing(target))?;
        copy.restore(&snap.files).map_err(|e| RollbackError::Storage(e.to_string()))?;
        if target < current {
            self.stats.rollback_count += 1;
            self.stats.thoughts_since_snapshot = current - target;
            self.stats.discarded_thoughts += current - target;
        }
        Ok(())
    }
}

fn persist(dir: &Path, files: &BTreeMap<PathBuf, String>, error_count: usize) -> std::io::Result<()> {
    for (rel, text) in files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, text)?;
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("error_count"), format!("{error_count}\n"))
}
