//! Byte-exact, reversible edits.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fast::AgentKind;
use crate::target::WorkingCopy;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("{file}: expected text not found at bytes {start}..{end}")]
    Stale { file: PathBuf, start: usize, end: usize },
    #[error("patch storage failed: {0}")]
    Storage(String),
}

/// Replacement of `before_text` at `before_span` with `after_text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub file: PathBuf,
    pub before_span: (usize, usize),
    pub before_text: String,
    pub after_text: String,
    pub agent: AgentKind,
    pub rationale: String,
}

impl PatchRecord {
    fn stale(&self, start: usize, end: usize) -> PatchError {
        PatchError::Stale { file: self.file.clone(), start, end }
    }

    pub fn apply(&self, text: &str) -> Result<String, PatchError> {
        let (s, e) = self.before_span;
        if text.get(s..e) != Some(self.before_text.as_str()) {
            return Err(self.stale(s, e));
        }
        Ok(format!("{}{}{}", &text[..s], self.after_text, &text[e..]))
    }

    pub fn revert(&self, text: &str) -> Result<String, PatchError> {
        let s = self.before_span.0;
        let e = s + self.after_text.len();
        if text.get(s..e) != Some(self.after_text.as_str()) {
            return Err(self.stale(s, e));
        }
        Ok(format!("{}{}{}", &text[..s], self.before_text, &text[e..]))
    }

    pub fn apply_to(&self, copy: &WorkingCopy) -> Result<(), PatchError> {
        let text = copy.read(&self.file).map_err(|e| PatchError::Storage(e.to_string()))?;
        copy.write(&self.file, &self.apply(&text)?).map_err(|e| PatchError::Storage(e.to_string()))
    }

    pub fn revert_from(&self, copy: &WorkingCopy) -> Result<(), PatchError> {
        let text = copy.read(&self.file).map_err(|e| PatchError::Storage(e.to_string()))?;
        copy.write(&self.file, &self.revert(&text)?).map_err(|e| PatchError::Storage(e.to_string()))
    }

    /// The changed lines of the edit, without the unchanged lines around them.
    pub fn diff(&self) -> String {
        let before: Vec<&str> = self.before_text.lines().collect();
        let after: Vec<&str> = self.after_text.lines().filter(|l| !(self.before_text.is_empty() && l.trim().is_empty())).collect();
        let head = before.iter().zip(&after).take_while(|(a, b)| a == b).count();
        let tail = before[head..].iter().rev().zip(after[head..].iter().rev()).take_while(|(a, b)| a == b).count();
        let mut out = format!("--- {} ({})\n", self.file.display(), self.agent);
        for l in &before[head..before.len() - tail] {
            out.push_str(&format!("-{l}\n"));
        }
        for l in &after[head..after.len() - tail] {
            out.push_str(&format!("+{l}\n"));
        }
        out
    }
}
