//! Splitting raw detector output into diagnostic blocks.

use std::path::PathBuf;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{UbKind, UbReport};

const BUILTIN_PATTERNS: &str = include_str!("../../data/ub_patterns.tsv");

/// Header prefixes that open a counted diagnostic block.
const UB_HEADERS: [&str; 5] = [
    "Undefined Behavior:",
    "the evaluated program deadlocked",
    "deadlock:",
    "abnormal termination:",
    "memory leaked:",
];

#[derive(Debug, Error)]
pub enum PatternTableError {
    #[error("line {line}: expected `<kind>\\t<regex>`")]
    Malformed { line: usize },
    #[error("line {line}: {reason}")]
    UnknownKind { line: usize, reason: String },
    #[error("line {line}: bad pattern: {source}")]
    BadRegex { line: usize, source: regex::Error },
}

/// Ordered keyword patterns; the first matching row decides the kind.
#[derive(Debug, Clone)]
pub struct PatternTable {
    rows: Vec<(UbKind, Regex)>,
}

impl PatternTable {
    pub fn parse(text: &str) -> Result<Self, PatternTableError> {
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (kind, pattern) = raw.split_once('\t').ok_or(PatternTableError::Malformed { line })?;
            let kind: UbKind = kind
                .trim()
                .parse()
                .map_err(|reason| PatternTableError::UnknownKind { line, reason })?;
            let regex =
                Regex::new(pattern).map_err(|source| PatternTableError::BadRegex { line, source })?;
            rows.push((kind, regex));
        }
        Ok(Self { rows })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static PatternTable {
        static TABLE: OnceLock<PatternTable> = OnceLock::new();
        TABLE.get_or_init(|| PatternTable::parse(BUILTIN_PATTERNS).expect("shipped pattern table parses"))
    }

    pub fn classify(&self, message: &str) -> UbKind {
        self.rows
            .iter()
            .find(|(_, re)| re.is_match(message))
            .map(|(kind, _)| *kind)
            .unwrap_or(UbKind::Unknown)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Classifies one diagnostic message with the shipped pattern table.
pub fn classify_kind(message: &str) -> UbKind {
    PatternTable::builtin().classify(message)
}

/// One report per UB block in `raw_output`, in output order.
pub fn parse_diagnostics(raw_output: &str) -> Vec<UbReport> {
    parse_with(raw_output, PatternTable::builtin())
}

pub(crate) fn parse_with(raw_output: &str, table: &PatternTable) -> Vec<UbReport> {
    let mut reports = Vec::new();
    let mut lines = line_offsets(raw_output).peekable();
    while let Some((start, line)) = lines.next() {
        let Some(message) = ub_header(line) else { continue };
        let mut end = start + line.len();
        while let Some(&(next_start, next)) = lines.peek() {
            if is_block_boundary(next) {
                break;
            }
            end = next_start + next.len();
            lines.next();
        }
        let raw = raw_output[start..end].trim_end();
        let (file, line_no) = first_local_location(raw);
        reports.push(UbReport {
            kind: table.classify(message),
            file,
            line: line_no,
            message: message.to_string(),
            raw: raw.to_string(),
        });
    }
    reports
}

/// `(byte offset, line without terminator)` pairs.
fn line_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |chunk| {
        let start = offset;
        offset += chunk.len();
        (start, chunk.trim_end_matches(['\n', '\r']))
    })
}

fn ub_header(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("error: ")?;
    UB_HEADERS.iter().find(|h| rest.starts_with(*h))?;
    let message = match rest.strip_prefix("Undefined Behavior:") {
        Some(tail) => tail.trim(),
        None => rest.trim(),
    };
    (!message.is_empty()).then_some(message)
}

fn is_block_boundary(line: &str) -> bool {
    line.starts_with("error") || line.starts_with("warning")
}

/// Every `path:line` in the block that points into the package rather
/// than the toolchain, in order of appearance.
pub fn local_locations(block: &str) -> Vec<(PathBuf, usize)> {
    static LOC: OnceLock<Regex> = OnceLock::new();
    let loc = LOC.get_or_init(|| Regex::new(r"^\s*(?:-->|at)\s+([^\s:][^:]*\.rs):(\d+):(\d+)").unwrap());
    block
        .lines()
        .filter_map(|line| {
            let caps = loc.captures(line)?;
            let path = &caps[1];
            if path.starts_with('/') || path.contains("rustlib") || path.starts_with('<') {
                return None;
            }
            let line_no: usize = caps[2].parse().ok().filter(|n: &usize| *n > 0)?;
            Some((PathBuf::from(path), line_no))
        })
        .collect()
}

fn first_local_location(block: &str) -> (PathBuf, Option<usize>) {
    match local_locations(block).into_iter().next() {
        Some((path, line)) => (path, Some(line)),
        None => (PathBuf::new(), None),
    }
}
