//! Undefined-behavior detection.
//!
//! A [`Detector`] runs the detection tool inside a working copy and hands
//! back its raw output; [`run_detection`] turns that output into a
//! [`DetectionResult`] with one [`UbReport`] per diagnostic block.

mod miri;
mod parse;
mod replay;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use miri::MiriDetector;
pub use parse::{classify_kind, parse_diagnostics, PatternTable, PatternTableError};
pub use replay::{source_fingerprint, DetectionRecord, RecordingDetector, ReplayDetector};

/// Default per-run budget for the detection tool.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Undefined-behavior taxonomy, one variant per dataset category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UbKind {
    StackBorrow,
    UnalignedPointer,
    Validity,
    Alloc,
    FunctionPointer,
    Provenance,
    Panic,
    FunctionCalls,
    DanglingPointer,
    BothBorrow,
    Concurrency,
    DataRace,
    Unknown,
}

impl UbKind {
    /// The twelve classified kinds, in table order. `Unknown` is excluded.
    pub const CLASSIFIED: [UbKind; 12] = [
        UbKind::StackBorrow,
        UbKind::UnalignedPointer,
        UbKind::Validity,
        UbKind::Alloc,
        UbKind::FunctionPointer,
        UbKind::Provenance,
        UbKind::Panic,
        UbKind::FunctionCalls,
        UbKind::DanglingPointer,
        UbKind::BothBorrow,
        UbKind::Concurrency,
        UbKind::DataRace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UbKind::StackBorrow => "StackBorrow",
            UbKind::UnalignedPointer => "UnalignedPointer",
            UbKind::Validity => "Validity",
            UbKind::Alloc => "Alloc",
            UbKind::FunctionPointer => "FunctionPointer",
            UbKind::Provenance => "Provenance",
            UbKind::Panic => "Panic",
            UbKind::FunctionCalls => "FunctionCalls",
            UbKind::DanglingPointer => "DanglingPointer",
            UbKind::BothBorrow => "BothBorrow",
            UbKind::Concurrency => "Concurrency",
            UbKind::DataRace => "DataRace",
            UbKind::Unknown => "Unknown",
        }
    }

    /// Human-readable row label ("stack borrow", "func. pointer", ...).
    pub fn label(self) -> &'static str {
        match self {
            UbKind::StackBorrow => "stack borrow",
            UbKind::UnalignedPointer => "unaligned pointer",
            UbKind::Validity => "validity",
            UbKind::Alloc => "alloc",
            UbKind::FunctionPointer => "func. pointer",
            UbKind::Provenance => "provenance",
            UbKind::Panic => "panic",
            UbKind::FunctionCalls => "func. calls",
            UbKind::DanglingPointer => "dangling pointer",
            UbKind::BothBorrow => "both borrow",
            UbKind::Concurrency => "concurrency",
            UbKind::DataRace => "data race",
            UbKind::Unknown => "unknown",
        }
    }

    /// Kinds whose detector verdict may depend on thread scheduling.
    pub fn is_schedule_dependent(self) -> bool {
        matches!(self, UbKind::Concurrency | UbKind::DataRace)
    }
}

impl fmt::Display for UbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for UbKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        UbKind::CLASSIFIED
            .iter()
            .chain(std::iter::once(&UbKind::Unknown))
            .find(|k| {
                k.name().eq_ignore_ascii_case(&wanted)
                    || k.label().replace(['.', ' '], "").eq_ignore_ascii_case(&wanted)
            })
            .copied()
            .ok_or_else(|| format!("unknown UB kind `{s}`"))
    }
}

/// One parsed diagnostic block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UbReport {
    pub kind: UbKind,
    /// Package-relative file of the first in-package location; empty when unknown.
    pub file: PathBuf,
    pub line: Option<usize>,
    pub message: String,
    /// The verbatim diagnostic block.
    pub raw: String,
}

impl UbReport {
    /// The message with allocation ids and borrow tags masked, for prompts.
    pub fn normalized_message(&self) -> String {
        normalize_diagnostic(&self.message)
    }

    /// Every in-package `(file, line)` the block mentions, backtrace frames included.
    pub fn locations(&self) -> Vec<(PathBuf, usize)> {
        parse::local_locations(&self.raw)
    }
}

/// Masks run-specific numbering (`alloc123`, `<456>`, addresses) in diagnostic text.
pub fn normalize_diagnostic(text: &str) -> String {
    use std::sync::OnceLock;
    static ALLOC: OnceLock<regex::Regex> = OnceLock::new();
    static TAG: OnceLock<regex::Regex> = OnceLock::new();
    static ADDR: OnceLock<regex::Regex> = OnceLock::new();
    let alloc = ALLOC.get_or_init(|| regex::Regex::new(r"\balloc\d+").unwrap());
    let tag = TAG.get_or_init(|| regex::Regex::new(r"<\d+>").unwrap());
    let addr = ADDR.get_or_init(|| regex::Regex::new(r"\b0x[0-9a-f]{4,}\b").unwrap());
    let text = alloc.replace_all(text, "allocN");
    let text = tag.replace_all(&text, "<TAG>");
    addr.replace_all(&text, "0xADDR").into_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub reports: Vec<UbReport>,
    pub error_count: usize,
    pub tool_exit_status: i32,
    pub wall_time: f64,
    /// Standard output of the interpreted program.
    pub stdout: String,
    /// Diagnostic stream the reports were parsed from.
    pub raw: String,
}

impl DetectionResult {
    pub fn is_clean(&self) -> bool {
        self.error_count == 0
    }

    pub fn kinds(&self) -> std::collections::BTreeSet<UbKind> {
        self.reports.iter().map(|r| r.kind).collect()
    }
}

/// What the tool printed and how it exited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub stdout: String,
    pub stderr: String,
    pub exit_status: i32,
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("detection tool not available: {0}")]
    ToolMissing(String),
    #[error("detection exceeded the {0:?} budget")]
    Timeout(Duration),
    #[error("program does not compile: {0}")]
    NonUbCompileError(String),
    #[error("no recorded detection for source fingerprint {0}")]
    ReplayMiss(String),
    #[error("detector i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// A UB detection backend.
pub trait Detector: Send + Sync {
    /// Runs the tool in the package rooted at `dir`.
    fn execute(&self, dir: &Path, timeout: Duration) -> Result<ToolOutput, DetectError>;

    fn name(&self) -> &str;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn execute(&self, dir: &Path, timeout: Duration) -> Result<ToolOutput, DetectError> {
        (**self).execute(dir, timeout)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<D: Detector + ?Sized> Detector for std::sync::Arc<D> {
    fn execute(&self, dir: &Path, timeout: Duration) -> Result<ToolOutput, DetectError> {
        (**self).execute(dir, timeout)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Runs detection on a working copy and parses the diagnostics.
pub fn run_detection(
    detector: &dyn Detector,
    dir: &Path,
    timeout: Duration,
) -> Result<DetectionResult, DetectError> {
    let started = Instant::now();
    let output = detector.execute(dir, timeout)?;
    let wall_time = started.elapsed().as_secs_f64();
    if let Some(message) = compile_failure(&output.stderr) {
        return Err(DetectError::NonUbCompileError(message));
    }
    let reports = parse_diagnostics(&output.stderr);
    tracing::debug!(detector = detector.name(), errors = reports.len(), "detection finished");
    Ok(DetectionResult {
        error_count: reports.len(),
        reports,
        tool_exit_status: output.exit_status,
        wall_time,
        stdout: output.stdout,
        raw: output.stderr,
    })
}

/// First rustc error when the package failed ordinary compilation.
fn compile_failure(stderr: &str) -> Option<String> {
    let failed = stderr.lines().any(|l| l.starts_with("error: could not compile"));
    let coded = stderr.lines().find(|l| l.starts_with("error[E"));
    if !failed && coded.is_none() {
        return None;
    }
    let first = coded
        .or_else(|| {
            stderr
                .lines()
                .find(|l| l.starts_with("error") && !l.starts_with("error: could not compile"))
        })
        .unwrap_or("compilation failed");
    Some(first.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Canned(ToolOutput);

    impl Detector for Canned {
        fn execute(&self, _: &Path, _: Duration) -> Result<ToolOutput, DetectError> {
            Ok(self.0.clone())
        }

        fn name(&self) -> &str {
            "canned"
        }
    }

    fn canned(stderr: &str, status: i32) -> Canned {
        Canned(ToolOutput { stdout: String::new(), stderr: stderr.into(), exit_status: status })
    }

    #[test]
    fn clean_run_has_zero_errors() {
        let result = run_detection(&canned("", 0), Path::new("."), DEFAULT_TIMEOUT).unwrap();
        assert_eq!(result.error_count, 0);
        assert!(result.is_clean());
    }

    #[test]
    fn compile_errors_are_reported_distinctly() {
        let stderr = "error[E0425]: cannot find value `y` in this scope\n --> src/main.rs:2:5\n\n\
                      error: could not compile `case` (bin \"case\") due to 1 previous error\n";
        let err = run_detection(&canned(stderr, 101), Path::new("."), DEFAULT_TIMEOUT).unwrap_err();
        match err {
            DetectError::NonUbCompileError(msg) => assert!(msg.starts_with("error[E0425]")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kind_round_trips_through_names_and_labels() {
        for kind in UbKind::CLASSIFIED {
            assert_eq!(kind.name().parse::<UbKind>().unwrap(), kind);
            assert_eq!(kind.label().parse::<UbKind>().unwrap(), kind);
        }
        assert_eq!("data_race".parse::<UbKind>().unwrap(), UbKind::DataRace);
        assert!("bogus".parse::<UbKind>().is_err());
    }

    #[test]
    fn normalization_masks_run_numbering() {
        let msg = "trying to retag from <498> for SharedReadOnly permission at alloc201[0x0]";
        assert_eq!(
            normalize_diagnostic(msg),
            "trying to retag from <TAG> for SharedReadOnly permission at allocN[0x0]"
        );
    }
}
