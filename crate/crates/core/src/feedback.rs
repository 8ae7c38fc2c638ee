//! Evaluation of finished sessions and experience-based re-ranking.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::detector::UbKind;
use crate::fast::{normalized_key, RepairSolution, RepairStep, SolutionProvenance};
use crate::kb::{append_line, FeatureVector, KnowledgeBase, KnowledgeEntry};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("experience storage failed: {0}")]
    Storage(String),
    #[error("reference bundle unusable: {0}")]
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTriplet {
    /// Final detection was clean.
    pub accuracy: bool,
    /// Behavior matched the reference; `None` when there was nothing to compare with.
    pub acceptability: Option<bool>,
    pub wall_time: f64,
    pub tokens: usize,
}

impl EvalTriplet {
    /// Builds a triplet, forcing acceptability to false when accuracy fails.
    pub fn new(accuracy: bool, acceptability: Option<bool>, wall_time: f64, tokens: usize) -> Self {
        let acceptability = if accuracy { acceptability } else { Some(false) };
        Self { accuracy, acceptability, wall_time: wall_time.max(0.0), tokens }
    }

    pub fn accepted(&self) -> bool {
        self.accuracy && self.acceptability == Some(true)
    }
}

/// Expected behavior of a developer-repaired version of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceBundle {
    pub dir: PathBuf,
    pub expected_stdout: Option<String>,
    pub expected_exit: i32,
    /// Shell command run in the repaired working copy; must exit 0.
    pub tests_cmd: Option<String>,
}

impl ReferenceBundle {
    /// Reads `expected_stdout.txt`, `expected_exit.txt` and `tests.cmd`, each optional.
    pub fn load(dir: &Path) -> Result<Self, FeedbackError> {
        if !dir.is_dir() {
            return Err(FeedbackError::Reference(format!("{} is not a directory", dir.display())));
        }
        let read = |name: &str| -> Result<Option<String>, FeedbackError> {
            let p = dir.join(name);
            if !p.is_file() {
                return Ok(None);
            }
            fs::read_to_string(&p).map(Some).map_err(|e| FeedbackError::Reference(format!("{}: {e}", p.display())))
        };
        let expected_exit = match read("expected_exit.txt")? {
            Some(t) => t.trim().parse().map_err(|_| FeedbackError::Reference("expected_exit.txt is not an integer".into()))?,
            None => 0,
        };
        let tests_cmd = read("tests.cmd")?.map(|c| c.trim().to_string()).filter(|c| !c.is_empty());
        Ok(Self { dir: dir.to_path_buf(), expected_stdout: read("expected_stdout.txt")?, expected_exit, tests_cmd })
    }
}

/// What the repaired program did under the final detection run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observed<'a> {
    pub clean: bool,
    pub stdout: &'a str,
    pub exit_status: i32,
    pub work_dir: &'a Path,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub triplet: EvalTriplet,
    /// Set when the reference could not be executed; acceptability is then unknown.
    pub reference_failure: Option<String>,
}

pub const TESTS_TIMEOUT: Duration = Duration::from_secs(120);

/// Scores a finished repair: accuracy is a clean detection; acceptability
/// requires the reference exit status, byte-equal stdout and a passing test
/// command, each when the reference provides it.
pub fn evaluate(observed: &Observed<'_>, reference: Option<&ReferenceBundle>, wall_time: f64, tokens: usize) -> Evaluation {
    let Some(reference) = reference else {
        return Evaluation { triplet: EvalTriplet::new(observed.clean, None, wall_time, tokens), reference_failure: None };
    };
    if !observed.clean {
        return Evaluation { triplet: EvalTriplet::new(false, Some(false), wall_time, tokens), reference_failure: None };
    }
    let mut ok = observed.exit_status == reference.expected_exit;
    if let Some(expected) = &reference.expected_stdout {
        ok &= observed.stdout == expected;
    }
    let mut failure = None;
    if ok {
        if let Some(cmd) = &reference.tests_cmd {
            match run_tests(cmd, observed.work_dir, TESTS_TIMEOUT) {
                Ok(passed) => ok &= passed,
                Err(e) => failure = Some(e),
            }
        }
    }
    let acceptability = if failure.is_some() { None } else { Some(ok) };
    Evaluation { triplet: EvalTriplet::new(true, acceptability, wall_time, tokens), reference_failure: failure }
}

fn run_tests(cmd: &str, dir: &Path, timeout: Duration) -> Result<bool, String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("cannot run `{cmd}`: {e}"))?;
    match child.wait_timeout(timeout).map_err(|e| e.to_string())? {
        Some(status) => Ok(status.success()),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            Err(format!("`{cmd}` timed out"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub feature_vector: FeatureVector,
    pub ub_kind: UbKind,
    pub solution_id: String,
    pub steps: Vec<RepairStep>,
    pub triplet: EvalTriplet,
}

impl ExperienceRecord {
    pub fn key(&self) -> String {
        normalized_key(&self.steps)
    }
}

/// Success weights used when ranking by experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub accepted: f64,
    pub accurate: f64,
    pub failed: f64,
    /// Similarity at or above which the knowledge lookup is skipped.
    pub bypass_threshold: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { accepted: 1.0, accurate: 0.5, failed: -0.25, bypass_threshold: 0.95 }
    }
}

impl ScoreWeights {
    pub fn weight(&self, t: &EvalTriplet) -> f64 {
        if t.accepted() {
            self.accepted
        } else if t.accuracy {
            self.accurate
        } else {
            self.failed
        }
    }
}

/// Append-only experience log, optionally backed by a JSONL file.
#[derive(Debug, Clone, Default)]
pub struct ExperienceLog {
    path: Option<PathBuf>,
    records: Vec<ExperienceRecord>,
}

impl ExperienceLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, FeedbackError> {
        let mut log = Self { path: Some(path.to_path_buf()), records: Vec::new() };
        if path.is_file() {
            let text = fs::read_to_string(path).map_err(|e| FeedbackError::Storage(format!("{}: {e}", path.display())))?;
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec = serde_json::from_str(line)
                    .map_err(|e| FeedbackError::Storage(format!("{}:{}: {e}", path.display(), idx + 1)))?;
                log.records.push(rec);
            }
        }
        Ok(log)
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A copy detached from the backing file.
    pub fn frozen(&self) -> Self {
        Self { path: None, records: self.records.clone() }
    }

    /// Appends `record`; records that passed detection also go to `kb`.
    pub fn record(&mut self, record: ExperienceRecord, kb: Option<&mut KnowledgeBase>, created: u64) -> Result<(), FeedbackError> {
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&record).expect("experience record serializes");
            append_line(path, &line).map_err(|e| FeedbackError::Storage(format!("{}: {e}", path.display())))?;
        }
        if record.triplet.accuracy && !record.feature_vector.is_zero() {
            if let Some(kb) = kb {
                kb.insert(KnowledgeEntry {
                    vector: record.feature_vector.clone(),
                    ub_kind: record.ub_kind,
                    solution: record.steps.clone(),
                    triplet: record.triplet.clone(),
                    created,
                })
                .map_err(|e| FeedbackError::Storage(e.to_string()))?;
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Highest similarity between `v` and a record that passed detection.
    pub fn best_success_similarity(&self, v: &FeatureVector) -> f64 {
        self.records.iter().filter(|r| r.triplet.accuracy).map(|r| v.cosine(&r.feature_vector)).fold(0.0, f64::max)
    }

    /// Experience score of a step sequence: the maximum over matching
    /// records of similarity times success weight.
    pub fn score(&self, steps: &[RepairStep], v: &FeatureVector, weights: &ScoreWeights) -> Option<f64> {
        let key = normalized_key(steps);
        self.records
            .iter()
            .filter(|r| r.key() == key)
            .map(|r| v.cosine(&r.feature_vector) * weights.weight(&r.triplet))
            .reduce(f64::max)
    }
}

/// Stable re-sort by experience score; candidates without experience count
/// as zero and keep their relative order.
pub fn rank_solutions(
    candidates: Vec<RepairSolution>,
    v: &FeatureVector,
    log: &ExperienceLog,
    weights: &ScoreWeights,
) -> Vec<RepairSolution> {
    let mut scored: Vec<(f64, RepairSolution)> = candidates
        .into_iter()
        .map(|mut c| {
            let score = log.score(&c.steps, v, weights);
            if score.is_some() {
                c.provenance = SolutionProvenance::FeedbackRanked;
            }
            (score.unwrap_or(0.0), c)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fast::AgentKind;

    fn solution(id: &str, agent: AgentKind) -> RepairSolution {
        RepairSolution {
            id: id.into(),
            steps: vec![RepairStep::new(agent, "R1", "x")],
            source_features: vec!["R1".into()],
            provenance: SolutionProvenance::Generated,
        }
    }

    fn record(agent: AgentKind, dims: Vec<f64>, triplet: EvalTriplet) -> ExperienceRecord {
        ExperienceRecord {
            feature_vector: FeatureVector { dims },
            ub_kind: UbKind::Alloc,
            solution_id: "S9".into(),
            steps: vec![RepairStep::new(agent, "R1", "y")],
            triplet,
        }
    }

    #[test]
    fn triplet_invariant() {
        let t = EvalTriplet::new(false, Some(true), -1.0, 3);
        assert_eq!(t.acceptability, Some(false));
        assert_eq!(t.wall_time, 0.0);
    }

    #[test]
    fn evaluation_cases() {
        let dir = tempfile::tempdir().unwrap();
        let reference = ReferenceBundle { dir: dir.path().into(), expected_stdout: Some("7\n".into()), expected_exit: 0, tests_cmd: None };
        let obs = |clean, stdout| Observed { clean, stdout, exit_status: 0, work_dir: dir.path() };
        assert_eq!(evaluate(&obs(true, "7\n"), Some(&reference), 1.0, 5).triplet.acceptability, Some(true));
        assert_eq!(evaluate(&obs(true, "8\n"), Some(&reference), 1.0, 5).triplet.acceptability, Some(false));
        let failed = evaluate(&obs(false, "7\n"), Some(&reference), 1.0, 5).triplet;
        assert!(!failed.accuracy && failed.acceptability == Some(false));
        assert_eq!(evaluate(&obs(true, ""), None, 1.0, 5).triplet.acceptability, None);
    }

    #[test]
    fn test_command_gates_acceptability() {
        let dir = tempfile::tempdir().unwrap();
        let mut reference = ReferenceBundle { dir: dir.path().into(), expected_stdout: None, expected_exit: 0, tests_cmd: Some("true".into()) };
        let obs = Observed { clean: true, stdout: "", exit_status: 0, work_dir: dir.path() };
        assert_eq!(evaluate(&obs, Some(&reference), 0.0, 0).triplet.acceptability, Some(true));
        reference.tests_cmd = Some("exit 3".into());
        assert_eq!(evaluate(&obs, Some(&reference), 0.0, 0).triplet.acceptability, Some(false));
    }

    #[test]
    fn empty_log_keeps_order() {
        let cands = vec![solution("S1", AgentKind::SafeReplace), solution("S2", AgentKind::AddAssertion)];
        let ranked = rank_solutions(cands.clone(), &FeatureVector { dims: vec![1.0] }, &ExperienceLog::in_memory(), &ScoreWeights::default());
        assert_eq!(ranked, cands);
    }

    #[test]
    fn hand_scores_order_candidates() {
        let mut log = ExperienceLog::in_memory();
        let v = FeatureVector { dims: vec![1.0, 0.0] };
        // cosine 0.8 with full acceptance, and cosine 0.8 with accuracy only (0.4).
        log.record(record(AgentKind::AddAssertion, vec![0.8, 0.6], EvalTriplet::new(true, Some(false), 1.0, 1)), None, 0).unwrap();
        log.record(record(AgentKind::ModifySemantics, vec![0.8, 0.6], EvalTriplet::new(true, Some(true), 1.0, 1)), None, 0).unwrap();
        let cands = vec![
            solution("S1", AgentKind::SafeReplace),
            solution("S2", AgentKind::AddAssertion),
            solution("S3", AgentKind::ModifySemantics),
        ];
        let ids: Vec<String> = rank_solutions(cands, &v, &log, &ScoreWeights::default()).into_iter().map(|c| c.id).collect();
        assert_eq!(ids, ["S3", "S2", "S1"]);
    }

    #[test]
    fn successes_reach_the_knowledge_base() {
        let mut kb = KnowledgeBase::in_memory();
        let mut log = ExperienceLog::in_memory();
        log.record(record(AgentKind::SafeReplace, vec![1.0], EvalTriplet::new(false, None, 1.0, 1)), Some(&mut kb), 0).unwrap();
        assert!(kb.is_empty());
        log.record(record(AgentKind::SafeReplace, vec![1.0], EvalTriplet::new(true, None, 1.0, 1)), Some(&mut kb), 1).unwrap();
        assert_eq!(kb.len(), 1);
        assert_eq!(log.len(), 2);
    }
}
