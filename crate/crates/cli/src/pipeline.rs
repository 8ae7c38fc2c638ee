//! One target end to end: detect, classify, plan, repair, evaluate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ubmend_core::detector::{run_detection, DetectError, Detector, MiriDetector, ReplayDetector, UbKind, UbReport};
use ubmend_core::fast::{extract_features, generate_solutions, region_ref, FastError, DEFAULT_SOLUTIONS};
use ubmend_core::feedback::{rank_solutions, ExperienceLog, ReferenceBundle, ScoreWeights};
use ubmend_core::kb::{extract_ast, prune, vectorize, AstMode, FeatureVector, KnowledgeBase, DEFAULT_DIMS};
use ubmend_core::provider::Provider;
use ubmend_core::rollback::RollbackTrigger;
use ubmend_core::slow::{run_session, Clock, SessionConfig, SessionContext, SessionOutcome, Verdict, DEFAULT_BUDGET};
use ubmend_core::target::{TargetError, TargetPackage, DEFAULT_TOKEN_BUDGET};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Fast(#[from] FastError),
    #[error("session directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad detector spec `{0}` (expected miri, miri:<toolchain> or replay:<path>)")]
    DetectorSpec(String),
}

/// Builds a detector from `miri`, `miri:<toolchain>` or `replay:<path>`.
pub fn open_detector(spec: &str) -> Result<Box<dyn Detector>, PipelineError> {
    match spec.split_once(':') {
        None if spec == "miri" => Ok(Box::new(MiriDetector::default())),
        Some(("miri", toolchain)) if !toolchain.is_empty() => Ok(Box::new(MiriDetector::new(toolchain))),
        Some(("replay", path)) => Ok(Box::new(ReplayDetector::load(Path::new(path))?)),
        _ => Err(PipelineError::DetectorSpec(spec.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct FixOptions {
    pub budget: usize,
    pub solutions: usize,
    pub use_kb: bool,
    pub timeout: Duration,
    pub clock: Clock,
    pub ast_mode: AstMode,
    pub token_budget: usize,
    pub weights: ScoreWeights,
    pub trigger: RollbackTrigger,
}

impl Default for FixOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            solutions: DEFAULT_SOLUTIONS,
            use_kb: true,
            timeout: ubmend_core::detector::DEFAULT_TIMEOUT,
            clock: Clock::Wall,
            ast_mode: AstMode::Provider,
            token_budget: DEFAULT_TOKEN_BUDGET,
            weights: ScoreWeights::default(),
            trigger: RollbackTrigger::default(),
        }
    }
}

/// Shared services; the knowledge base is ignored when `use_kb` is off.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub detector: &'a dyn Detector,
    pub provider: &'a Provider,
    pub kb: Option<&'a KnowledgeBase>,
    pub experience: Option<&'a ExperienceLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixReport {
    pub verdict: Verdict,
    pub baseline_errors: usize,
    /// Count on the final source, when it could be re-detected.
    pub final_errors: Option<usize>,
    pub detected: Vec<UbKind>,
    /// `R#: kinds` for each feature the plans refer to.
    pub features: Vec<String>,
    pub solutions: Vec<String>,
    pub outcome: SessionOutcome,
}

impl FixReport {
    /// Applied edits as unified-style hunks.
    pub fn diff_summary(&self) -> String {
        self.outcome.applied_patches().iter().map(|p| p.diff()).collect()
    }
}

/// Vector of the pruned AST of the file holding the first report.
pub fn feature_vector(
    sources: &BTreeMap<PathBuf, String>,
    primary: &Path,
    reports: &[UbReport],
    mode: AstMode,
    provider: &Provider,
) -> FeatureVector {
    let file = reports
        .iter()
        .map(|r| r.file.clone())
        .find(|f| sources.contains_key(f))
        .unwrap_or_else(|| primary.to_path_buf());
    let Some(source) = sources.get(&file).filter(|s| !s.trim().is_empty()) else {
        return FeatureVector::zeros(DEFAULT_DIMS);
    };
    let Ok(extraction) = extract_ast(source, mode, Some(provider)) else {
        return FeatureVector::zeros(DEFAULT_DIMS);
    };
    let local: Vec<UbReport> = reports.iter().filter(|r| r.file == file).cloned().collect();
    vectorize(&extraction.ast, &prune(&extraction.ast, &local))
}

/// Repairs a copy of the target at `path`; the original is never modified.
pub fn fix_target(
    path: &Path,
    reference: Option<&ReferenceBundle>,
    opts: &FixOptions,
    res: Resources<'_>,
) -> Result<FixReport, PipelineError> {
    let target = TargetPackage::load(path, opts.token_budget)?;
    let session = tempfile::Builder::new().prefix("ubmend-").tempdir()?;
    let copy = target.working_copy(session.path())?;
    let baseline = run_detection(res.detector, &copy.dir, opts.timeout)?;
    let sources = copy.files()?;
    let primary = copy.primary_file();
    let kb = res.kb.filter(|_| opts.use_kb);
    let (features, solutions, vector) = if baseline.is_clean() {
        (Vec::new(), Vec::new(), FeatureVector::zeros(DEFAULT_DIMS))
    } else {
        let features = extract_features(&sources, &primary, &baseline.reports, res.provider)?;
        let solutions = generate_solutions(&features, opts.solutions, opts.use_kb, res.provider)?;
        let vector = feature_vector(&sources, &primary, &baseline.reports, opts.ast_mode, res.provider);
        let solutions = match res.experience {
            Some(log) => rank_solutions(solutions, &vector, log, &opts.weights),
            None => solutions,
        };
        (features, solutions, vector)
    };
    let ctx = SessionContext {
        copy: &copy,
        detector: res.detector,
        provider: res.provider,
        features: &features,
        vector: &vector,
        kb,
        experience: res.experience,
        reference,
        config: SessionConfig {
            budget: opts.budget,
            trigger: opts.trigger,
            timeout: opts.timeout,
            clock: opts.clock,
            weights: opts.weights,
        },
    };
    let solution_keys = solutions.iter().map(|s| format!("{} {}", s.id, s.normalized_key())).collect();
    let outcome = run_session(&ctx, &baseline, solutions);
    let final_errors = outcome.triplet.is_some().then(|| outcome.trace.counts[outcome.final_index]);
    Ok(FixReport {
        verdict: outcome.verdict,
        baseline_errors: baseline.error_count,
        final_errors,
        detected: baseline.kinds().into_iter().collect(),
        features: features
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{}: {}", region_ref(i), f.ub_kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")))
            .collect(),
        solutions: solution_keys,
        outcome,
    })
}
