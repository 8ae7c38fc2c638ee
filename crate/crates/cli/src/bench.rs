//! Benchmark harness: runs the pipeline over a manifest of cases and
//! reports pass and execution rates with Wilson intervals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use ubmend_core::detector::UbKind;
use ubmend_core::feedback::ReferenceBundle;

use crate::pipeline::{fix_target, FixOptions, Resources};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty manifest")]
    EmptyManifest,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
    #[error("case `{id}`: `{path}` does not exist")]
    MissingPath { id: String, path: PathBuf },
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub path: PathBuf,
    pub ub_kind: UbKind,
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Paths resolved against the manifest's directory.
    pub cases: Vec<ManifestCase>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&fs::read_to_string(path)?, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, BenchError> {
        let mut cases = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut case: ManifestCase =
                serde_json::from_str(line).map_err(|e| BenchError::Manifest { line: i + 1, message: e.to_string() })?;
            if !ids.insert(case.id.clone()) {
                return Err(BenchError::DuplicateId(case.id));
            }
            case.path = base.join(&case.path);
            case.reference = case.reference.map(|r| base.join(r));
            if !case.path.exists() {
                return Err(BenchError::MissingPath { id: case.id, path: case.path });
            }
            cases.push(case);
        }
        if cases.is_empty() {
            return Err(BenchError::EmptyManifest);
        }
        Ok(Self { cases })
    }
}

/// Wilson score interval for `successes` out of `trials` at `confidence`.
pub fn compute_ci(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    assert!(trials >= 1 && successes <= trials, "need 0 <= successes <= trials and trials >= 1");
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub expected_kind: UbKind,
    pub detected: Vec<UbKind>,
    /// Verdict name, or `error` when the pipeline could not run.
    pub verdict: String,
    pub passed: bool,
    pub accepted: bool,
    pub baseline_errors: Option<usize>,
    pub final_errors: Option<usize>,
    pub counts: Vec<usize>,
    pub rollbacks: usize,
    pub solution: Option<String>,
    pub tokens: usize,
    /// Seconds (or detection runs under the logical clock) with the knowledge base.
    pub time_kb: Option<f64>,
    pub time_no_kb: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindRow {
    pub kind: UbKind,
    pub cases: usize,
    pub passed: usize,
    pub accepted: usize,
    pub avg_time_no_kb: Option<f64>,
    pub avg_time_kb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub cases: Vec<CaseResult>,
    pub total: usize,
    pub passed: usize,
    pub accepted: usize,
    pub pass_rate: f64,
    pub exec_rate: f64,
    pub pass_ci: (f64, f64),
    pub exec_ci: (f64, f64),
    pub per_kind: Vec<KindRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl BenchReport {
    /// Aggregates case results in the given order.
    pub fn from_cases(cases: Vec<CaseResult>) -> Self {
        let total = cases.len();
        let passed = cases.iter().filter(|c| c.passed).count();
        let accepted = cases.iter().filter(|c| c.accepted).count();
        let rate = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
        let ci = |k: usize| if total == 0 { (0.0, 1.0) } else { compute_ci(k, total, 0.95) };
        let mut by_kind: BTreeMap<UbKind, Vec<&CaseResult>> = BTreeMap::new();
        for c in &cases {
            by_kind.entry(c.expected_kind).or_default().push(c);
        }
        let per_kind = by_kind
            .into_iter()
            .map(|(kind, cs)| KindRow {
                kind,
                cases: cs.len(),
                passed: cs.iter().filter(|c| c.passed).count(),
                accepted: cs.iter().filter(|c| c.accepted).count(),
                avg_time_no_kb: mean(cs.iter().filter_map(|c| c.time_no_kb)),
                avg_time_kb: mean(cs.iter().filter_map(|c| c.time_kb)),
            })
            .collect();
        Self {
            schema: SCHEMA_VERSION,
            total,
            passed,
            accepted,
            pass_rate: rate(passed),
            exec_rate: rate(accepted),
            pass_ci: ci(passed),
            exec_ci: ci(accepted),
            per_kind,
            cases,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "table" | "text" => Ok(Self::Table),
            other => Err(format!("unknown report format `{other}` (json or table)")),
        }
    }
}

fn cell(t: Option<f64>) -> String {
    t.map_or_else(|| "-".into(), |t| format!("{t:.2}"))
}

pub fn render_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Table => render_table(report),
    }
}

fn render_table(report: &BenchReport) -> String {
    let header = ["UB kind", "Cases", "Pass", "Exec", "Avg time/s (no KB)", "Avg time/s (KB)"];
    let mut rows: Vec<[String; 6]> = report
        .per_kind
        .iter()
        .map(|r| {
            [
                r.kind.label().to_string(),
                r.cases.to_string(),
                r.passed.to_string(),
                r.accepted.to_string(),
                cell(r.avg_time_no_kb),
                cell(r.avg_time_kb),
            ]
        })
        .collect();
    rows.insert(0, header.map(str::to_string));
    let widths: Vec<usize> = (0..6).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
            out.push('\n');
        }
    }
    if report.total > 0 {
        let _ = writeln!(
            out,
            "\npass rate {:.1}% [{:.1}, {:.1}]  exec rate {:.1}% [{:.1}, {:.1}]  ({} cases)",
            report.pass_rate * 100.0,
            report.pass_ci.0 * 100.0,
            report.pass_ci.1 * 100.0,
            report.exec_rate * 100.0,
            report.exec_ci.0 * 100.0,
            report.exec_ci.1 * 100.0,
            report.total
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub fix: FixOptions,
    /// Also run every case with the other knowledge-base setting.
    pub ablation: bool,
    pub threads: usize,
}

/// Default worker count: logical CPUs, at most eight.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

fn run_case(case: &ManifestCase, opts: &BenchOptions, res: Resources<'_>) -> CaseResult {
    let mut result = CaseResult {
        id: case.id.clone(),
        expected_kind: case.ub_kind,
        detected: Vec::new(),
        verdict: "error".into(),
        passed: false,
        accepted: false,
        baseline_errors: None,
        final_errors: None,
        counts: Vec::new(),
        rollbacks: 0,
        solution: None,
        tokens: 0,
        time_kb: None,
        time_no_kb: None,
        error: None,
    };
    let reference = match case.reference.as_deref().map(ReferenceBundle::load).transpose() {
        Ok(r) => r,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let primary_kb = opts.fix.use_kb;
    let mut settings = vec![primary_kb];
    if opts.ablation {
        settings.push(!primary_kb);
    }
    for use_kb in settings {
        let fix = FixOptions { use_kb, ..opts.fix.clone() };
        let run = fix_target(&case.path, reference.as_ref(), &fix, res);
        let time = run.as_ref().ok().and_then(|r| r.outcome.triplet.as_ref()).map(|t| t.wall_time);
        if use_kb {
            result.time_kb = time;
        } else {
            result.time_no_kb = time;
        }
        if use_kb != primary_kb {
            continue;
        }
        match run {
            Ok(r) => {
                result.detected = r.detected;
                result.verdict = r.verdict.name().into();
                result.passed = r.verdict.is_pass();
                result.accepted = r.outcome.triplet.as_ref().is_some_and(|t| t.accepted());
                result.baseline_errors = Some(r.baseline_errors);
                result.final_errors = r.final_errors;
                result.counts = r.outcome.trace.counts.clone();
                result.rollbacks = r.outcome.rollback.rollback_count;
                result.solution = r.outcome.solution_id.clone();
                result.tokens = r.outcome.triplet.as_ref().map_or(0, |t| t.tokens);
                result.error = r.outcome.note.clone();
            }
            Err(e) => result.error = Some(e.to_string()),
        }
    }
    result
}

/// Runs every case (in parallel) and aggregates; per-case failures are
/// recorded, never fatal.
pub fn run_bench(manifest: &DatasetManifest, opts: &BenchOptions, res: Resources<'_>) -> Result<BenchReport, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let cases = pool.install(|| manifest.cases.par_iter().map(|c| run_case(c, opts, res)).collect());
    Ok(BenchReport::from_cases(cases))
}
