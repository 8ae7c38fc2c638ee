//! Feature extraction and rapid generation of candidate repair plans.

mod plan;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{parse_plan, render_plan};

use crate::classifier::{
    classify_ops, locate_unsafe_regions, map_strategies, scope_facts, CodeFeature, FixStrategy, SafeCatalogue,
    StrategyPolicy, UnsafeRegion,
};
use crate::detector::UbReport;
use crate::prompts;
use crate::provider::{PromptRecord, PromptTask, Provider, ProviderError};

pub const DEFAULT_SOLUTIONS: usize = 10;

#[derive(Debug, Error)]
pub enum FastError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("source could not be lexed: {0}")]
    Lex(String),
    #[error("solution count must be at least 1")]
    ZeroSolutions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    SafeReplace,
    AddAssertion,
    ModifySemantics,
    Reason,
    Rollback,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] =
        [AgentKind::SafeReplace, AgentKind::AddAssertion, AgentKind::ModifySemantics, AgentKind::Reason, AgentKind::Rollback];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::SafeReplace => "SafeReplace",
            AgentKind::AddAssertion => "AddAssertion",
            AgentKind::ModifySemantics => "ModifySemantics",
            AgentKind::Reason => "Reason",
            AgentKind::Rollback => "Rollback",
        }
    }

    /// Spelling used in plan text.
    pub fn plan_name(self) -> &'static str {
        match self {
            AgentKind::SafeReplace => "SAFE_REPLACE",
            AgentKind::AddAssertion => "ADD_ASSERTION",
            AgentKind::ModifySemantics => "MODIFY_SEMANTICS",
            AgentKind::Reason => "REASON",
            AgentKind::Rollback => "ROLLBACK",
        }
    }

    pub fn strategy(self) -> Option<FixStrategy> {
        match self {
            AgentKind::SafeReplace => Some(FixStrategy::SafeAlternative),
            AgentKind::AddAssertion => Some(FixStrategy::AssertionGuard),
            AgentKind::ModifySemantics => Some(FixStrategy::SemanticModification),
            AgentKind::Reason | AgentKind::Rollback => None,
        }
    }

    pub fn for_strategy(strategy: FixStrategy) -> Self {
        match strategy {
            FixStrategy::SafeAlternative => AgentKind::SafeReplace,
            FixStrategy::AssertionGuard => AgentKind::AddAssertion,
            FixStrategy::SemanticModification => AgentKind::ModifySemantics,
        }
    }

    pub fn is_fix(self) -> bool {
        self.strategy().is_some()
    }

    pub(crate) fn default_instruction(self) -> &'static str {
        match self {
            AgentKind::SafeReplace => "replace the unsafe operation with a safe equivalent",
            AgentKind::AddAssertion => "guard the unsafe operation with assertions",
            AgentKind::ModifySemantics => "rewrite the faulty logic around the unsafe operation",
            AgentKind::Reason => "look up repairs of similar unsafe code",
            AgentKind::Rollback => "return to the best state so far",
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    /// Accepts `SafeReplace`, `SAFE_REPLACE`, `safe replace` and the like.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown agent `{s}`"))
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairStep {
    pub agent: AgentKind,
    /// Region reference (`R1`, `R2`, ...) into the session's feature list.
    pub target: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl RepairStep {
    pub fn new(agent: AgentKind, target: &str, instruction: &str) -> Self {
        Self { agent, target: target.to_string(), instruction: instruction.to_string(), params: BTreeMap::new() }
    }

    /// Index into the feature list, if `target` has the `R<n>` form.
    pub fn region_index(&self) -> Option<usize> {
        self.target.strip_prefix('R')?.parse::<usize>().ok()?.checked_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionProvenance {
    Generated,
    FeedbackRanked,
    KnowledgeSeeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairSolution {
    pub id: String,
    pub steps: Vec<RepairStep>,
    /// Region references of the features the solution addresses.
    pub source_features: Vec<String>,
    pub provenance: SolutionProvenance,
}

impl RepairSolution {
    /// Agent and region sequence, ignoring instruction wording.
    pub fn normalized_key(&self) -> String {
        normalized_key(&self.steps)
    }
}

pub fn normalized_key(steps: &[RepairStep]) -> String {
    steps.iter().map(|s| format!("{}@{}", s.agent.name(), s.target)).collect::<Vec<_>>().join(";")
}

pub fn region_ref(index: usize) -> String {
    format!("R{}", index + 1)
}

fn joined<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Whether any in-package location of `report` falls inside `region`'s
/// lines, or, with `context`, inside its enclosing function.
fn report_hits(report: &UbReport, file: &Path, region: &UnsafeRegion, source: &str, context: bool) -> bool {
    let mut locations = report.locations();
    if locations.is_empty() {
        if let Some(line) = report.line {
            locations.push((report.file.clone(), line));
        }
    }
    let (lo, hi) = if context && region.enclosing_fn.is_some() { region.context_lines(source) } else { region.lines };
    locations.iter().any(|(f, line)| f == file && (lo..=hi).contains(line))
}

/// One feature per unsafe region touched by a report. Reports are matched
/// to the regions containing one of their locations, or else to regions
/// whose enclosing function contains one. When no region matches any report
/// a single whole-file feature carries every kind.
pub fn extract_features(
    sources: &BTreeMap<PathBuf, String>,
    primary: &Path,
    reports: &[UbReport],
    provider: &Provider,
) -> Result<Vec<CodeFeature>, FastError> {
    if reports.is_empty() {
        return Ok(Vec::new());
    }
    let mut found: Vec<(UnsafeRegion, BTreeSet<crate::classifier::UnsafeOpKind>, BTreeSet<crate::detector::UbKind>)> =
        Vec::new();
    let mut per_file = Vec::new();
    for (file, source) in sources {
        if file.extension().is_none_or(|e| e != "rs") {
            continue;
        }
        let regions = locate_unsafe_regions(source, file).map_err(|e| FastError::Lex(e.to_string()))?;
        let facts = scope_facts(source).map_err(|e| FastError::Lex(e.to_string()))?;
        per_file.push((file, source, regions, facts));
    }
    let mut hits: BTreeMap<(usize, usize), BTreeSet<crate::detector::UbKind>> = BTreeMap::new();
    for report in reports {
        for context in [false, true] {
            let mut matched = false;
            for (f, (file, source, regions, _)) in per_file.iter().enumerate() {
                for (r, region) in regions.iter().enumerate() {
                    if report_hits(report, file, region, source, context) {
                        hits.entry((f, r)).or_default().insert(report.kind);
                        matched = true;
                    }
                }
            }
            if matched {
                break;
            }
        }
    }
    for ((f, r), kinds) in hits {
        let (_, _, regions, facts) = &per_file[f];
        let region = regions[r].clone();
        let ops = classify_ops(&region, facts).unwrap_or_default();
        found.push((region, ops, kinds));
    }
    if found.is_empty() {
        let file = if sources.contains_key(primary) { primary.to_path_buf() } else { sources.keys().next().cloned().unwrap_or_default() };
        let source = sources.get(&file).map(String::as_str).unwrap_or("");
        tracing::info!("no unsafe region overlaps the reports; using the whole file");
        found.push((UnsafeRegion::whole_file(file, source), BTreeSet::new(), reports.iter().map(|r| r.kind).collect()));
    }
    let mut features = Vec::with_capacity(found.len());
    for (i, (region, op_kinds, ub_kinds)) in found.into_iter().enumerate() {
        let errors: Vec<String> = reports
            .iter()
            .filter(|r| ub_kinds.contains(&r.kind))
            .map(|r| format!("- {}: {}", r.kind.label(), r.normalized_message()))
            .collect();
        let vars = BTreeMap::from([
            ("region".to_string(), region_ref(i)),
            ("region_ref".to_string(), region_ref(i)),
            ("fn".to_string(), region.enclosing_fn.clone().unwrap_or_default()),
            ("ops".to_string(), joined(&op_kinds)),
            ("ub_kinds".to_string(), joined(&ub_kinds)),
            ("errors".to_string(), errors.join("\n")),
            ("snippet".to_string(), region.snippet.clone()),
            ("context".to_string(), region.enclosing_context.clone()),
        ]);
        let prompt = PromptRecord::new(PromptTask::Summary, prompts::SYSTEM, prompts::render(prompts::SUMMARY, &vars), vars);
        let summary = provider.complete(&prompt)?.text.trim().to_string();
        features.push(CodeFeature { region, op_kinds, ub_kinds, context_summary: summary });
    }
    Ok(features)
}

/// Asks the provider for up to `k` plans and keeps the distinct, valid ones.
/// A plan with no usable step is requested once more; after that a template
/// plan per leading strategy is used.
pub fn generate_solutions(
    features: &[CodeFeature],
    k: usize,
    with_reasoning: bool,
    provider: &Provider,
) -> Result<Vec<RepairSolution>, FastError> {
    if k == 0 {
        return Err(FastError::ZeroSolutions);
    }
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let orders = strategy_orders(features);
    let mut plans = Vec::new();
    for attempt in 0..2 {
        let prompt = plan_prompt(features, k, with_reasoning, attempt);
        let text = provider.complete(&prompt)?.text;
        plans = parse_plan(&text)
            .into_iter()
            .map(|steps| valid_steps(steps, features.len(), with_reasoning))
            .filter(|s: &Vec<RepairStep>| s.iter().any(|st| st.agent.is_fix()))
            .collect();
        if !plans.is_empty() {
            break;
        }
        tracing::warn!(attempt, "plan output had no usable step");
    }
    if plans.is_empty() {
        plans = template_plans(&orders, with_reasoning);
    }
    Ok(dedup_cap(plans, k))
}

fn strategy_orders(features: &[CodeFeature]) -> Vec<Vec<FixStrategy>> {
    features.iter().map(|f| map_strategies(f, StrategyPolicy::builtin(), SafeCatalogue::builtin())).collect()
}

/// The plan request; `attempt` 1 is the retry after an unusable answer.
pub fn plan_prompt(features: &[CodeFeature], k: usize, with_reasoning: bool, attempt: usize) -> PromptRecord {
    let orders = strategy_orders(features);
    let mut listing = String::new();
    let mut table = String::new();
    for (i, f) in features.iter().enumerate() {
        listing.push_str(&format!(
            "{} ({}; undefined behavior: {}; preferred strategies: {})\n{}\n```rust\n{}\n```\n\n",
            region_ref(i),
            f.region.enclosing_fn.as_deref().map_or("file scope".to_string(), |n| format!("in `{n}`")),
            joined(&f.ub_kinds),
            joined(&orders[i]),
            f.context_summary,
            f.region.snippet
        ));
        table.push_str(&format!("{}\t{}\n", region_ref(i), orders[i].iter().map(|s| s.name()).collect::<Vec<_>>().join(",")));
    }
    let reason = if with_reasoning {
        "  REASON            consult the knowledge base of earlier repairs (put it first)\n"
    } else {
        ""
    };
    let vars = BTreeMap::from([
        ("features".to_string(), table.trim_end().to_string()),
        ("k".to_string(), k.to_string()),
        ("kb".to_string(), if with_reasoning { "on" } else { "off" }.to_string()),
    ]);
    let shown = BTreeMap::from([
        ("features".to_string(), listing.trim_end().to_string()),
        ("k".to_string(), k.to_string()),
        ("reason".to_string(), reason.to_string()),
    ]);
    let mut user = prompts::render(prompts::PLAN, &shown);
    if attempt > 0 {
        user.push_str("\n\nYour previous answer contained no usable STEP line. Follow the format exactly.");
    }
    PromptRecord::new(PromptTask::Plan, prompts::SYSTEM, user, vars)
}

fn valid_steps(steps: Vec<RepairStep>, n_features: usize, with_reasoning: bool) -> Vec<RepairStep> {
    steps
        .into_iter()
        .filter(|s| s.region_index().is_some_and(|i| i < n_features))
        .filter(|s| with_reasoning || s.agent != AgentKind::Reason)
        .collect()
}

/// One plan per leading strategy: the mapped order rotated so each strategy leads once.
pub fn template_plans(orders: &[Vec<FixStrategy>], with_reasoning: bool) -> Vec<Vec<RepairStep>> {
    (0..3)
        .map(|lead| {
            let mut steps = Vec::new();
            for (i, order) in orders.iter().enumerate() {
                let r = region_ref(i);
                if with_reasoning {
                    steps.push(RepairStep::new(AgentKind::Reason, &r, AgentKind::Reason.default_instruction()));
                }
                for j in 0..order.len() {
                    let agent = AgentKind::for_strategy(order[(lead + j) % order.len()]);
                    steps.push(RepairStep::new(agent, &r, agent.default_instruction()));
                }
            }
            steps
        })
        .collect()
}

fn dedup_cap(plans: Vec<Vec<RepairStep>>, k: usize) -> Vec<RepairSolution> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for steps in plans {
        if out.len() == k {
            break;
        }
        if !seen.insert(normalized_key(&steps)) {
            continue;
        }
        let mut idx: Vec<usize> = steps.iter().filter_map(RepairStep::region_index).collect();
        idx.sort_unstable();
        idx.dedup();
        let refs = idx.into_iter().map(region_ref).collect();
        out.push(RepairSolution {
            id: format!("S{}", out.len() + 1),
            steps,
            source_features: refs,
            provenance: SolutionProvenance::Generated,
        });
    }
    out
}
