//! Catalogue of known safe replacements for unsafe idioms.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{PolicyError, UnsafeOpKind};

const BUILTIN: &str = include_str!("../../data/safe_catalogue.tsv");

#[derive(Debug, Clone)]
pub struct CatalogueEntry {
    pub name: String,
    /// Only consulted for regions carrying this op kind; `None` matches any.
    pub op_kind: Option<UnsafeOpKind>,
    pub pattern: Regex,
    /// Replacement template; `None` for hint-only rows.
    pub rewrite: Option<String>,
    pub hint: String,
}

#[derive(Debug, Clone, Default)]
pub struct SafeCatalogue {
    entries: Vec<CatalogueEntry>,
}

impl SafeCatalogue {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            let [name, op, pattern, rewrite, hint] = cols[..] else {
                return Err(PolicyError::Malformed { line, reason: "expected five tab-separated columns".into() });
            };
            let op_kind = match op {
                "*" => None,
                other => Some(other.parse().map_err(|reason| PolicyError::Malformed { line, reason })?),
            };
            let pattern = Regex::new(pattern)
                .map_err(|e| PolicyError::Malformed { line, reason: e.to_string() })?;
            entries.push(CatalogueEntry {
                name: name.to_string(),
                op_kind,
                pattern,
                rewrite: (rewrite != "-").then(|| rewrite.to_string()),
                hint: hint.to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> &'static SafeCatalogue {
        static CAT: OnceLock<SafeCatalogue> = OnceLock::new();
        CAT.get_or_init(|| SafeCatalogue::parse(BUILTIN).expect("shipped catalogue parses"))
    }

    pub fn entries(&self) -> &[CatalogueEntry] {
        &self.entries
    }

    /// Rows applicable to a snippet with the given op kinds.
    pub fn matches<'a>(&'a self, snippet: &str, ops: &BTreeSet<UnsafeOpKind>) -> Vec<&'a CatalogueEntry> {
        self.entries
            .iter()
            .filter(|e| e.op_kind.is_none_or(|k| ops.contains(&k)) && e.pattern.is_match(snippet))
            .collect()
    }

    /// Applies every rewriting row that matches `text`; `None` when nothing changed.
    pub fn rewrite(&self, text: &str) -> Option<(String, Vec<String>)> {
        let mut out = text.to_string();
        let mut applied = Vec::new();
        for entry in &self.entries {
            let Some(template) = &entry.rewrite else { continue };
            if entry.pattern.is_match(&out) {
                out = entry.pattern.replace_all(&out, template.as_str()).into_owned();
                applied.push(entry.name.clone());
            }
        }
        (out != text).then_some((out, applied))
    }
}
