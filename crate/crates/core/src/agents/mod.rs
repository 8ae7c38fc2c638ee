//! The three fix agents: safe replacement, assertion insertion and semantic
//! modification. Each renders a prompt, asks the provider, and turns the
//! fenced code in the answer into one [`PatchRecord`].

mod patch;
mod scope;

use std::cell::Cell;
use std::collections::BTreeMap;

use thiserror::Error;

pub use patch::{PatchError, PatchRecord};
pub use scope::{locate_statement, locate_scope, strip_redundant_unsafe, EditScope, Statement};

use crate::classifier::{CodeFeature, FixStrategy, SafeCatalogue, UnsafeOpKind};
use crate::detector::UbReport;
use crate::fast::AgentKind;
use crate::prompts;
use crate::provider::{PromptRecord, PromptTask, Provider, ProviderError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no safe equivalent for this region")]
    NoSafeEquivalent,
    #[error("no guard can express the precondition: {0}")]
    NoGuardExpressible(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("agent reply unusable: {0}")]
    ParseFailure(String),
    #[error("agent proposed no change")]
    NoChange,
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("{0} is not a fix agent")]
    NotAFixAgent(AgentKind),
}

/// Everything an agent sees for one step.
#[derive(Debug, Clone)]
pub struct AgentInput<'a> {
    pub feature: &'a CodeFeature,
    /// Current text of the feature's file.
    pub source: &'a str,
    /// Current detector reports for the whole program.
    pub reports: &'a [UbReport],
    /// Repairs retrieved by a preceding reasoning step.
    pub knowledge: Option<&'a str>,
    pub instruction: &'a str,
    /// Provider tokens spent, accumulated across calls.
    pub tokens: &'a Cell<usize>,
}

/// First fenced code block in `reply`.
pub fn extract_fenced(reply: &str) -> Option<String> {
    let mut lines = reply.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let mut body = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(body.join("\n"));
        }
        body.push(line);
    }
    None
}

fn error_lines(input: &AgentInput<'_>) -> String {
    let relevant: Vec<&UbReport> = input.reports.iter().filter(|r| input.feature.ub_kinds.contains(&r.kind)).collect();
    let chosen = if relevant.is_empty() { input.reports.iter().collect() } else { relevant };
    chosen
        .iter()
        .map(|r| match r.line {
            Some(l) => format!("- {} at line {l}: {}", r.kind.label(), r.normalized_message()),
            None => format!("- {}: {}", r.kind.label(), r.normalized_message()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn joined<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Builds the prompt for a fix agent; `scope_text` is the code to rewrite.
pub fn fix_prompt(agent: AgentKind, input: &AgentInput<'_>, snippet: &str, scope_text: &str) -> Result<PromptRecord, AgentError> {
    let strategy = agent.strategy().ok_or(AgentError::NotAFixAgent(agent))?;
    let (template, task) = match strategy {
        FixStrategy::SafeAlternative => (prompts::SAFE_REPLACE, PromptTask::SafeReplace),
        FixStrategy::AssertionGuard => (prompts::ADD_ASSERTION, PromptTask::AddAssertion),
        FixStrategy::SemanticModification => (prompts::MODIFY_SEMANTICS, PromptTask::ModifySemantics),
    };
    let f = input.feature;
    let hints: Vec<String> = SafeCatalogue::builtin()
        .matches(snippet, &f.op_kinds)
        .iter()
        .map(|e| format!("Hint: {}.\n", e.hint))
        .collect();
    let context = match input.knowledge {
        Some(k) if !k.trim().is_empty() => format!("\nRepairs of similar code that passed detection:\n{k}\n"),
        _ => String::new(),
    };
    let vars = BTreeMap::from([
        ("strategy".to_string(), strategy.name().to_string()),
        ("snippet".to_string(), snippet.to_string()),
        ("scope".to_string(), scope_text.to_string()),
        ("errors".to_string(), error_lines(input)),
        ("context".to_string(), context),
        ("hint".to_string(), hints.concat()),
        ("intent".to_string(), f.context_summary.clone()),
        ("instruction".to_string(), input.instruction.to_string()),
        ("ops".to_string(), joined(&f.op_kinds)),
        ("ub_kinds".to_string(), joined(&f.ub_kinds)),
    ]);
    let mut user = prompts::render(template, &vars);
    user.push_str(&format!("\nStep: {}\n", input.instruction));
    Ok(PromptRecord::new(task, prompts::SYSTEM, user, vars))
}

/// Runs one fix agent and returns its patch against `input.source`.
pub fn run_agent(agent: AgentKind, input: &AgentInput<'_>, provider: &Provider) -> Result<PatchRecord, AgentError> {
    match agent {
        AgentKind::SafeReplace => rewrite(agent, input, provider),
        AgentKind::ModifySemantics => rewrite(agent, input, provider),
        AgentKind::AddAssertion => add_assertion(input, provider),
        other => Err(AgentError::NotAFixAgent(other)),
    }
}

pub fn safe_replace(input: &AgentInput<'_>, provider: &Provider) -> Result<PatchRecord, AgentError> {
    rewrite(AgentKind::SafeReplace, input, provider)
}

pub fn modify_semantics(input: &AgentInput<'_>, provider: &Provider) -> Result<PatchRecord, AgentError> {
    rewrite(AgentKind::ModifySemantics, input, provider)
}

fn rewrite(agent: AgentKind, input: &AgentInput<'_>, provider: &Provider) -> Result<PatchRecord, AgentError> {
    let scope = locate_scope(input.feature, input.source);
    let scope_text = &input.source[scope.span.0..scope.span.1];
    let prompt = fix_prompt(agent, input, &scope.snippet, scope_text)?;
    let reply = ask(provider, &prompt, input.tokens)?;
    let Some(code) = extract_fenced(&reply) else {
        if agent == AgentKind::SafeReplace && reply.contains(crate::provider::NO_SAFE_EQUIVALENT) {
            return Err(AgentError::NoSafeEquivalent);
        }
        return Err(AgentError::ParseFailure("no fenced code block".into()));
    };
    let mut after = strip_redundant_unsafe(input.source, scope.span, &code);
    if scope_text.ends_with('\n') && !after.ends_with('\n') {
        after.push('\n');
    }
    if after == scope_text {
        return Err(if agent == AgentKind::SafeReplace { AgentError::NoSafeEquivalent } else { AgentError::NoChange });
    }
    Ok(PatchRecord {
        file: input.feature.region.file.clone(),
        before_span: scope.span,
        before_text: scope_text.to_string(),
        after_text: after,
        agent,
        rationale: reply.lines().find(|l| !l.trim().is_empty() && !l.starts_with("```")).unwrap_or("").trim().to_string(),
    })
}

fn ask(provider: &Provider, prompt: &PromptRecord, tokens: &Cell<usize>) -> Result<String, AgentError> {
    let c = provider.complete(prompt)?;
    tokens.set(tokens.get() + c.tokens);
    Ok(c.text)
}

/// Why assertions cannot help this feature, if they cannot.
fn guard_obstacle(feature: &CodeFeature) -> Option<String> {
    if !feature.ub_kinds.is_empty() && feature.ub_kinds.iter().all(|k| k.is_schedule_dependent()) {
        return Some("the fault depends on thread scheduling".into());
    }
    if feature.region.is_whole_file() {
        return Some("no unsafe region to guard".into());
    }
    let local = [UnsafeOpKind::RawPointerDeref, UnsafeOpKind::UnsafeFnCall];
    if !feature.op_kinds.is_empty() && !feature.op_kinds.iter().any(|k| local.contains(k)) {
        return Some("the unsafe operation depends on state outside the site".into());
    }
    None
}

pub fn add_assertion(input: &AgentInput<'_>, provider: &Provider) -> Result<PatchRecord, AgentError> {
    if let Some(why) = guard_obstacle(input.feature) {
        return Err(AgentError::NoGuardExpressible(why));
    }
    let scope = locate_scope(input.feature, input.source);
    let stmt = locate_statement(input.source, &scope)
        .ok_or_else(|| AgentError::NoGuardExpressible("the unsafe operation has no statement boundary".into()))?;
    let prompt = fix_prompt(AgentKind::AddAssertion, input, &scope.snippet, &stmt.text)?;
    let reply = ask(provider, &prompt, input.tokens)?;
    let Some(code) = extract_fenced(&reply) else {
        if reply.contains(crate::provider::NO_GUARD) {
            return Err(AgentError::NoGuardExpressible("the agent found no checkable precondition".into()));
        }
        return Err(AgentError::ParseFailure("no fenced code block".into()));
    };
    let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let code_sq = squash(&code);
    let stmt_sq = squash(&stmt.text);
    let Some(prefix_sq) = code_sq.strip_suffix(&stmt_sq) else {
        return Err(AgentError::ParseFailure("guarded block must end with the original statement".into()));
    };
    if prefix_sq.trim().is_empty() {
        return Err(AgentError::NoChange);
    }
    // Recover the guard lines from the unsquashed block: everything before the statement's first line.
    let first = stmt.text.lines().next().unwrap_or("").trim();
    let cut = code.rfind(first).ok_or_else(|| AgentError::ParseFailure("statement not found in reply".into()))?;
    let guards: Vec<&str> = code[..cut].lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if guards.is_empty() {
        return Err(AgentError::NoChange);
    }
    let mut inserted = String::new();
    for g in guards {
        inserted.push_str(g);
        inserted.push('\n');
        inserted.push_str(&stmt.indent);
    }
    Ok(PatchRecord {
        file: input.feature.region.file.clone(),
        before_span: (stmt.start, stmt.start),
        before_text: String::new(),
        after_text: inserted,
        agent: AgentKind::AddAssertion,
        rationale: reply.lines().find(|l| !l.trim().is_empty() && !l.starts_with("```")).unwrap_or("").trim().to_string(),
    })
}
