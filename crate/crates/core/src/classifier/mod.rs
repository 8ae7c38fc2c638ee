//! Unsafe-region location, operation classification and strategy mapping.

mod catalogue;
mod ops;
mod policy;
mod regions;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::UbKind;

pub use catalogue::{CatalogueEntry, SafeCatalogue};
pub use ops::{classify_ops, UNSAFE_APIS};
pub use policy::{map_strategies, StrategyPolicy};
pub use regions::{fn_items, locate_unsafe_regions, scope_facts, FnItem, RegionKind, ScopeFacts};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("source could not be lexed: {0}")]
    LexFailure(String),
    #[error("no recognizable unsafe operation in region")]
    Unclassifiable,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsafeRegion {
    pub file: PathBuf,
    pub byte_span: (usize, usize),
    pub snippet: String,
    pub enclosing_context: String,
    /// Byte span of `enclosing_context` in the file.
    pub context_span: (usize, usize),
    pub enclosing_fn: Option<String>,
    pub kind: RegionKind,
    /// Spans of unsafe regions folded into this one.
    pub nested: Vec<(usize, usize)>,
    /// First and last 1-based line.
    pub lines: (usize, usize),
}

impl UnsafeRegion {
    /// A region covering a whole file, used when no unsafe region overlaps a report.
    pub fn whole_file(file: PathBuf, source: &str) -> Self {
        let last = crate::lexer::line_of(source, source.len().saturating_sub(1));
        UnsafeRegion {
            file,
            byte_span: (0, source.len()),
            snippet: source.to_string(),
            enclosing_context: source.to_string(),
            context_span: (0, source.len()),
            enclosing_fn: None,
            kind: RegionKind::WholeFile,
            nested: Vec::new(),
            lines: (1, last.max(1)),
        }
    }

    pub fn is_whole_file(&self) -> bool {
        self.kind == RegionKind::WholeFile
    }

    /// Lines of the enclosing context.
    pub fn context_lines(&self, source: &str) -> (usize, usize) {
        let (s, e) = self.context_span;
        (crate::lexer::line_of(source, s), crate::lexer::line_of(source, e.saturating_sub(1).max(s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnsafeOpKind {
    RawPointerDeref,
    UnsafeFnCall,
    UnsafeTraitImpl,
    MutableStaticAccess,
    UnionFieldAccess,
}

impl UnsafeOpKind {
    pub const ALL: [UnsafeOpKind; 5] = [
        UnsafeOpKind::RawPointerDeref,
        UnsafeOpKind::UnsafeFnCall,
        UnsafeOpKind::UnsafeTraitImpl,
        UnsafeOpKind::MutableStaticAccess,
        UnsafeOpKind::UnionFieldAccess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnsafeOpKind::RawPointerDeref => "RawPointerDeref",
            UnsafeOpKind::UnsafeFnCall => "UnsafeFnCall",
            UnsafeOpKind::UnsafeTraitImpl => "UnsafeTraitImpl",
            UnsafeOpKind::MutableStaticAccess => "MutableStaticAccess",
            UnsafeOpKind::UnionFieldAccess => "UnionFieldAccess",
        }
    }
}

impl FromStr for UnsafeOpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown op kind `{s}`"))
    }
}

impl fmt::Display for UnsafeOpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FixStrategy {
    SafeAlternative,
    AssertionGuard,
    SemanticModification,
}

impl FixStrategy {
    pub const ALL: [FixStrategy; 3] =
        [FixStrategy::SafeAlternative, FixStrategy::AssertionGuard, FixStrategy::SemanticModification];

    pub fn name(self) -> &'static str {
        match self {
            FixStrategy::SafeAlternative => "SafeAlternative",
            FixStrategy::AssertionGuard => "AssertionGuard",
            FixStrategy::SemanticModification => "SemanticModification",
        }
    }
}

impl FromStr for FixStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

impl fmt::Display for FixStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An unsafe region together with what it does and which UB landed in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFeature {
    pub region: UnsafeRegion,
    /// Empty only for whole-file fallback features.
    pub op_kinds: BTreeSet<UnsafeOpKind>,
    pub ub_kinds: BTreeSet<UbKind>,
    pub context_summary: String,
}
