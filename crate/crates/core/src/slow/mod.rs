//! The repair loop. Solutions run in rank order, one step at a time; every
//! fix step is followed by a fresh detection whose count extends the error
//! trace. A diverging trace rolls the working copy back to the snapshot with
//! the fewest errors and moves on to the next solution.

use std::cell::Cell;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agents::{run_agent, AgentInput, PatchRecord};
use crate::classifier::CodeFeature;
use crate::detector::{run_detection, DetectError, DetectionResult, Detector, UbKind, UbReport};
use crate::fast::{AgentKind, RepairSolution, RepairStep};
use crate::feedback::{evaluate, rank_solutions, EvalTriplet, ExperienceLog, ExperienceRecord, Observed, ReferenceBundle, ScoreWeights};
use crate::kb::{FeatureVector, KnowledgeBase};
use crate::provider::Provider;
use crate::rollback::{select_rollback_target, RollbackStats, RollbackTrigger, SnapshotStore};
use crate::target::WorkingCopy;

/// Fix thoughts allowed per session.
pub const DEFAULT_BUDGET: usize = 5;

/// One executed fix step and the detection count it left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub index: usize,
    pub solution_id: String,
    pub step: RepairStep,
    /// Absent when the agent failed or the patch was reverted.
    pub patch: Option<PatchRecord>,
    pub resulting_errors: usize,
    pub failure: Option<String>,
    /// Snapshot the step was applied to.
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    /// `counts[0]` is the baseline; `counts[i + 1]` follows thought `i`.
    pub counts: Vec<usize>,
    pub thoughts: Vec<Thought>,
    pub iteration_budget: usize,
}

impl ErrorTrace {
    pub fn new(baseline: usize, iteration_budget: usize) -> Self {
        Self { counts: vec![baseline], thoughts: Vec::new(), iteration_budget }
    }

    pub fn latest(&self) -> usize {
        *self.counts.last().expect("trace has a baseline")
    }

    /// Fewest errors seen so far.
    pub fn best(&self) -> usize {
        self.counts.iter().copied().min().expect("trace has a baseline")
    }

    fn push(&mut self, thought: Thought) {
        self.counts.push(thought.resulting_errors);
        self.thoughts.push(thought);
    }
}

/// Divergence test with the default growth factor of two.
pub fn should_rollback(trace: &ErrorTrace, window: usize) -> bool {
    RollbackTrigger { window, ..RollbackTrigger::default() }.fires(&trace.counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    SemanticPass,
    Failed,
    BudgetExhausted,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::SemanticPass)
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::SemanticPass => "semantic_pass",
            Verdict::Failed => "failed",
            Verdict::BudgetExhausted => "budget_exhausted",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub verdict: Verdict,
    pub final_source: BTreeMap<PathBuf, String>,
    pub trace: ErrorTrace,
    pub triplet: Option<EvalTriplet>,
    /// Solution whose last step reached zero errors.
    pub solution_id: Option<String>,
    pub rollback: RollbackStats,
    /// One record per solution tried, ready for the experience log.
    pub experience: Vec<ExperienceRecord>,
    pub detections: usize,
    /// Why the session stopped early or could not be fully evaluated.
    pub note: Option<String>,
    /// Snapshot held by `final_source`.
    pub final_index: usize,
}

impl SessionOutcome {
    /// Patches still present in `final_source`, in application order.
    pub fn applied_patches(&self) -> Vec<&PatchRecord> {
        let kept = self.kept_thoughts();
        self.trace.thoughts.iter().filter(|t| kept.contains(&t.index)).filter_map(|t| t.patch.as_ref()).collect()
    }

    /// Thoughts on the path from the baseline to the final snapshot.
    fn kept_thoughts(&self) -> Vec<usize> {
        let mut path = Vec::new();
        let mut at = self.final_index;
        while let Some(i) = at.checked_sub(1) {
            path.push(i);
            at = self.trace.thoughts[i].parent;
        }
        path.reverse();
        path
    }
}

/// What `wall_time` measures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    Wall,
    /// One unit per detection run, so reports are reproducible.
    Logical,
}

impl std::str::FromStr for Clock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wall" => Ok(Clock::Wall),
            "logical" => Ok(Clock::Logical),
            other => Err(format!("unknown clock `{other}` (expected wall or logical)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub budget: usize,
    pub trigger: RollbackTrigger,
    pub timeout: Duration,
    pub clock: Clock,
    pub weights: ScoreWeights,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            trigger: RollbackTrigger::default(),
            timeout: crate::detector::DEFAULT_TIMEOUT,
            clock: Clock::Wall,
            weights: ScoreWeights::default(),
        }
    }
}

/// Everything a session reads but does not own.
pub struct SessionContext<'a> {
    pub copy: &'a WorkingCopy,
    pub detector: &'a dyn Detector,
    pub provider: &'a Provider,
    /// Features the solutions' region references index into.
    pub features: &'a [CodeFeature],
    /// Vector of the pruned baseline AST.
    pub vector: &'a FeatureVector,
    pub kb: Option<&'a KnowledgeBase>,
    pub experience: Option<&'a ExperienceLog>,
    pub reference: Option<&'a ReferenceBundle>,
    pub config: SessionConfig,
}

/// Mutable loop state.
struct State {
    trace: ErrorTrace,
    snapshots: SnapshotStore,
    /// Reports per snapshot index.
    reports: Vec<Vec<UbReport>>,
    /// Snapshot currently in the working copy.
    current: usize,
    knowledge: Option<String>,
    tokens: Cell<usize>,
    detections: usize,
}

enum StepResult {
    Thought(Box<Thought>),
    NoThought,
    Abort(String),
}

fn detect(ctx: &SessionContext<'_>, state: &mut State) -> Result<DetectionResult, DetectError> {
    state.detections += 1;
    run_detection(ctx.detector, &ctx.copy.dir, ctx.config.timeout)
}

fn knowledge_for(ctx: &SessionContext<'_>) -> Option<String> {
    let kb = ctx.kb?;
    let lines: Vec<String> = kb
        .search(ctx.vector, 3)
        .into_iter()
        .filter(|(_, sim)| *sim > 0.0)
        .map(|(e, sim)| {
            let steps: Vec<String> =
                e.solution.iter().map(|s| format!("{} on {}: {}", s.agent.plan_name(), s.target, s.instruction)).collect();
            format!("- {} (similarity {sim:.2}): {}", e.ub_kind.label(), steps.join("; "))
        })
        .collect();
    (!lines.is_empty()).then(|| lines.join("\n"))
}

/// Runs one step against the working copy. Reasoning and rollback steps
/// leave no thought; a fix step always does, even when its agent fails.
fn execute_step(ctx: &SessionContext<'_>, state: &mut State, solution: &str, step: &RepairStep, use_kb: bool) -> StepResult {
    match step.agent {
        AgentKind::Reason => {
            if use_kb {
                state.knowledge = knowledge_for(ctx);
            }
            return StepResult::NoThought;
        }
        AgentKind::Rollback => {
            let target = select_rollback_target(&state.trace.counts);
            if target != state.current {
                if let Err(e) = state.snapshots.restore(target, state.current, ctx.copy) {
                    return StepResult::Abort(e.to_string());
                }
                state.current = target;
            }
            return StepResult::NoThought;
        }
        _ => {}
    }
    let index = state.trace.thoughts.len();
    let previous = state.trace.latest();
    let mut thought = Thought {
        index,
        solution_id: solution.to_string(),
        step: step.clone(),
        patch: None,
        resulting_errors: previous,
        failure: None,
        parent: state.current,
    };
    let Some(feature) = step.region_index().and_then(|i| ctx.features.get(i)) else {
        thought.failure = Some(format!("no region {}", step.target));
        return StepResult::Thought(Box::new(thought));
    };
    let source = match ctx.copy.read(&feature.region.file) {
        Ok(s) => s,
        Err(e) => return StepResult::Abort(e.to_string()),
    };
    let knowledge = state.knowledge.take();
    let input = AgentInput {
        feature,
        source: &source,
        reports: &state.reports[state.current],
        knowledge: knowledge.as_deref(),
        instruction: &step.instruction,
        tokens: &state.tokens,
    };
    let patch = match run_agent(step.agent, &input, ctx.provider) {
        Ok(p) => p,
        Err(e) => {
            tracing::info!(thought = index, agent = %step.agent, error = %e, "agent failed");
            thought.failure = Some(e.to_string());
            return StepResult::Thought(Box::new(thought));
        }
    };
    if let Err(e) = patch.apply_to(ctx.copy) {
        thought.failure = Some(e.to_string());
        return StepResult::Thought(Box::new(thought));
    }
    match detect(ctx, state) {
        Ok(result) => {
            thought.resulting_errors = result.error_count;
            thought.patch = Some(patch);
            state.reports.push(result.reports);
        }
        Err(e @ (DetectError::NonUbCompileError(_) | DetectError::Timeout(_))) => {
            if let Err(r) = patch.revert_from(ctx.copy) {
                return StepResult::Abort(r.to_string());
            }
            thought.failure = Some(e.to_string());
        }
        Err(e) => {
            let _ = patch.revert_from(ctx.copy);
            return StepResult::Abort(e.to_string());
        }
    }
    StepResult::Thought(Box::new(thought))
}

fn primary_kind(reports: &[UbReport]) -> UbKind {
    reports.first().map_or(UbKind::Unknown, |r| r.kind)
}

/// Repairs the working copy with `solutions`, given the detection of its
/// untouched state. The copy ends holding the best snapshot, which is
/// detected once more to decide the verdict.
pub fn run_session(ctx: &SessionContext<'_>, baseline: &DetectionResult, solutions: Vec<RepairSolution>) -> SessionOutcome {
    let started = Instant::now();
    let budget = ctx.config.budget.max(1);
    let kind = primary_kind(&baseline.reports);
    let mut state = State {
        trace: ErrorTrace::new(baseline.error_count, budget),
        snapshots: SnapshotStore::new(Some(ctx.copy.snapshots_dir())),
        reports: vec![baseline.reports.clone()],
        current: 0,
        knowledge: None,
        tokens: Cell::new(0),
        detections: 1,
    };
    let mut note = None;
    match ctx.copy.files() {
        Ok(files) => {
            if let Err(e) = state.snapshots.record(0, files, baseline.error_count) {
                note = Some(e.to_string());
            }
        }
        Err(e) => note = Some(e.to_string()),
    }
    let mut log = ctx.experience.map_or_else(ExperienceLog::in_memory, ExperienceLog::frozen);
    let use_kb = log.best_success_similarity(ctx.vector) < ctx.config.weights.bypass_threshold;
    let mut queue: VecDeque<RepairSolution> = solutions.into();
    let mut solved: Option<RepairSolution> = None;
    let mut exhausted = false;
    let mut experience = Vec::new();

    'solutions: while baseline.error_count > 0 && note.is_none() {
        let Some(solution) = queue.pop_front() else { break };
        state.knowledge = None;
        let mut diverged = false;
        for step in &solution.steps {
            if step.agent.is_fix() && state.trace.thoughts.len() >= budget {
                exhausted = true;
                break;
            }
            let thought = match execute_step(ctx, &mut state, &solution.id, step, use_kb) {
                StepResult::NoThought => continue,
                StepResult::Abort(why) => {
                    note = Some(why);
                    break 'solutions;
                }
                StepResult::Thought(t) => *t,
            };
            let index = thought.index + 1;
            let count = thought.resulting_errors;
            if thought.patch.is_none() {
                state.reports.push(state.reports[state.current].clone());
            }
            state.trace.push(thought);
            let files = match ctx.copy.files() {
                Ok(f) => f,
                Err(e) => {
                    note = Some(e.to_string());
                    break 'solutions;
                }
            };
            if let Err(e) = state.snapshots.record(index, files, count) {
                note = Some(e.to_string());
                break 'solutions;
            }
            state.current = index;
            if count == 0 {
                solved = Some(solution.clone());
                break 'solutions;
            }
            if ctx.config.trigger.fires(&state.trace.counts) {
                let target = select_rollback_target(&state.trace.counts);
                tracing::info!(counts = ?state.trace.counts, target, "error trace diverged; rolling back");
                if let Err(e) = state.snapshots.restore(target, state.current, ctx.copy) {
                    note = Some(e.to_string());
                    break 'solutions;
                }
                state.current = target;
                diverged = true;
                break;
            }
        }
        if !diverged {
            let target = select_rollback_target(&state.trace.counts);
            if target != state.current {
                if let Err(e) = state.snapshots.restore(target, state.current, ctx.copy) {
                    note = Some(e.to_string());
                    break;
                }
                state.current = target;
            }
        }
        let failed = ExperienceRecord {
            feature_vector: ctx.vector.clone(),
            ub_kind: kind,
            solution_id: solution.id.clone(),
            steps: solution.steps.clone(),
            triplet: EvalTriplet::new(false, Some(false), 0.0, 0),
        };
        experience.push(failed.clone());
        if exhausted {
            break;
        }
        let _ = log.record(failed, None, 0);
        queue = rank_solutions(queue.into(), ctx.vector, &log, &ctx.config.weights).into();
    }
    finish(ctx, state, FinishArgs { baseline, started, kind, solved, exhausted, experience, note })
}

struct FinishArgs<'b> {
    baseline: &'b DetectionResult,
    started: Instant,
    kind: UbKind,
    solved: Option<RepairSolution>,
    exhausted: bool,
    experience: Vec<ExperienceRecord>,
    note: Option<String>,
}

fn elapsed(ctx: &SessionContext<'_>, state: &State, started: Instant) -> f64 {
    match ctx.config.clock {
        Clock::Wall => started.elapsed().as_secs_f64(),
        Clock::Logical => state.detections as f64,
    }
}

fn finish(ctx: &SessionContext<'_>, mut state: State, args: FinishArgs<'_>) -> SessionOutcome {
    let FinishArgs { baseline, started, kind, solved, exhausted, mut experience, mut note } = args;
    if let Some(best) = state.snapshots.best().map(|s| s.index) {
        if best != state.current {
            match state.snapshots.restore(best, state.current, ctx.copy) {
                Ok(()) => state.current = best,
                Err(e) => note = Some(e.to_string()),
            }
        }
    }
    let final_source = ctx.copy.files().unwrap_or_default();
    let verified = if state.trace.thoughts.is_empty() { Ok(baseline.clone()) } else { detect(ctx, &mut state) };
    let wall = elapsed(ctx, &state, started);
    let triplet = match verified {
        Ok(r) => {
            let observed = Observed { clean: r.is_clean(), stdout: &r.stdout, exit_status: r.tool_exit_status, work_dir: &ctx.copy.dir };
            let eval = evaluate(&observed, ctx.reference, wall, state.tokens.get());
            if let Some(f) = eval.reference_failure {
                note.get_or_insert(f);
            }
            Some(eval.triplet)
        }
        Err(e) => {
            note.get_or_insert(format!("final detection failed: {e}"));
            None
        }
    };
    let verdict = match &triplet {
        Some(t) if t.accuracy && t.acceptability == Some(true) => Verdict::SemanticPass,
        Some(t) if t.accuracy => Verdict::Pass,
        _ if exhausted => Verdict::BudgetExhausted,
        _ => Verdict::Failed,
    };
    let solved = solved.filter(|_| verdict.is_pass());
    let solution_id = solved.as_ref().map(|s| s.id.clone());
    if let (Some(s), Some(t)) = (solved, &triplet) {
        experience.push(ExperienceRecord {
            feature_vector: ctx.vector.clone(),
            ub_kind: kind,
            solution_id: s.id,
            steps: s.steps,
            triplet: t.clone(),
        });
    }
    SessionOutcome {
        verdict,
        final_source,
        rollback: state.snapshots.stats(),
        detections: state.detections,
        trace: state.trace,
        triplet,
        solution_id,
        experience,
        note,
        final_index: state.current,
    }
}

#[cfg(test)]
mod tests;
