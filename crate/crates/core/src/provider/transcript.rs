//! Line-delimited prompt/response transcripts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub hash: String,
    pub prompt: String,
    pub response: String,
    pub model: String,
    pub temperature: f64,
}

/// Entries keyed by prompt hash; the first response recorded for a hash wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    entries: BTreeMap<String, TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProviderError::Storage(format!("{}: {e}", path.display())))?;
        let mut t = Self::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| ProviderError::Storage(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            t.insert(entry);
        }
        Ok(t)
    }

    /// Returns false when the hash was already present.
    pub fn insert(&mut self, entry: TranscriptEntry) -> bool {
        if let Some(existing) = self.entries.get(&entry.hash) {
            if existing.response != entry.response {
                tracing::warn!(hash = %entry.hash, "conflicting response for recorded prompt; keeping the first");
            }
            return false;
        }
        self.entries.insert(entry.hash.clone(), entry);
        true
    }

    pub fn merge(&mut self, other: &Transcript) {
        for e in other.entries.values() {
            self.insert(e.clone());
        }
    }

    pub fn get(&self, hash: &str) -> Option<&TranscriptEntry> {
        self.entries.get(hash)
    }

    pub fn entries(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes entries sorted by hash.
    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        let storage = |e: std::io::Error| ProviderError::Storage(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(storage)?;
        }
        let mut file = fs::File::create(path).map_err(storage)?;
        for e in self.entries.values() {
            let line = serde_json::to_string(e).expect("transcript entry serializes");
            writeln!(file, "{line}").map_err(storage)?;
        }
        Ok(())
    }
}
