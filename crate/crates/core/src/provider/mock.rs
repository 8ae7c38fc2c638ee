//! Deterministic offline provider.
//!
//! Answers are synthesized from the prompt's placeholder values. Fix
//! prompts are first matched against scripted find/replace rules; without
//! a matching rule the mock falls back to the safe-replacement catalogue,
//! simple pointer guards, or an unchanged echo of the code.

use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PromptRecord, PromptTask, ProviderError};
use crate::classifier::{FixStrategy, SafeCatalogue};

/// One scripted edit: when `when` matches the code under repair, replace the
/// first occurrence of `find` with `replace`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Fix agent the rule applies to (`SafeReplace`, `AddAssertion`, `ModifySemantics`); any when absent.
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when: Option<String>,
    pub find: String,
    pub replace: String,
}

impl MockRule {
    /// Reads one JSON rule per line; blank lines and `//` comments are skipped.
    pub fn load(path: &Path) -> Result<Vec<MockRule>, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| ProviderError::Storage(format!("{}: {e}", path.display())))?;
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule: MockRule = serde_json::from_str(line)
                .map_err(|e| ProviderError::Config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            if let Some(w) = &rule.when {
                Regex::new(w).map_err(|e| ProviderError::Config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            }
            rules.push(rule);
        }
        Ok(rules)
    }

    fn applies(&self, agent: &str, code: &str) -> bool {
        self.agent.as_deref().is_none_or(|a| a == agent)
            && self.when.as_deref().is_none_or(|w| Regex::new(w).is_ok_and(|re| re.is_match(code)))
            && code.contains(&self.find)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    rules: Vec<MockRule>,
}

pub(crate) const NO_SAFE_EQUIVALENT: &str = "NO_SAFE_EQUIVALENT";
pub(crate) const NO_GUARD: &str = "NO_GUARD";

fn fenced(code: &str) -> String {
    format!("```rust\n{}\n```", code.trim_end_matches('\n'))
}

impl ScriptedMock {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    pub fn respond(&self, prompt: &PromptRecord) -> String {
        match prompt.task {
            PromptTask::Summary => summary(prompt),
            PromptTask::Plan => plan(prompt),
            PromptTask::Ast => match crate::kb::extract_local(prompt.var("source")) {
                Ok(ast) => fenced(&crate::kb::render_indented(&ast)),
                Err(_) => "cannot parse".into(),
            },
            PromptTask::SafeReplace | PromptTask::AddAssertion | PromptTask::ModifySemantics => self.fix(prompt),
        }
    }

    fn fix(&self, prompt: &PromptRecord) -> String {
        let agent = match prompt.task {
            PromptTask::SafeReplace => "SafeReplace",
            PromptTask::AddAssertion => "AddAssertion",
            _ => "ModifySemantics",
        };
        let code = prompt.var("scope");
        if let Some(rule) = self.rules.iter().find(|r| r.applies(agent, code)) {
            return format!("Scripted edit.\n{}", fenced(&code.replacen(&rule.find, &rule.replace, 1)));
        }
        match prompt.task {
            PromptTask::SafeReplace => match SafeCatalogue::builtin().rewrite(code) {
                Some((text, names)) => format!("Replaced via {}.\n{}", names.join(", "), fenced(&text)),
                None => format!("{NO_SAFE_EQUIVALENT}: no catalogued safe construct applies."),
            },
            PromptTask::AddAssertion => {
                let guards = guards_for(prompt.var("snippet"));
                if guards.is_empty() {
                    format!("{NO_GUARD}: the fault is not checkable at this site.")
                } else {
                    format!("Guarded.\n{}", fenced(&format!("{}\n{}", guards.join("\n"), code)))
                }
            }
            _ => format!("No change suggested.\n{}", fenced(code)),
        }
    }
}

/// Simple runtime checks for the pointer and index operations in `snippet`.
pub(crate) fn guards_for(snippet: &str) -> Vec<String> {
    let deref = Regex::new(r"(?:^|[^\w)\]])\*([a-z_][A-Za-z0-9_]*)\b").expect("static regex");
    let unchecked = Regex::new(r"([a-z_][A-Za-z0-9_]*)\.get_unchecked(?:_mut)?\(([^()]+)\)").expect("static regex");
    let to_bool = Regex::new(r"transmute::<u8,\s*bool>\(([^()]+)\)").expect("static regex");
    let mut out: Vec<String> = Vec::new();
    let mut push = |g: String| {
        if !out.contains(&g) {
            out.push(g);
        }
    };
    for c in deref.captures_iter(snippet) {
        let p = &c[1];
        if matches!(p, "const" | "mut" | "self") {
            continue;
        }
        push(format!("assert!(!{p}.is_null() && {p}.is_aligned(), \"`{p}` must be non-null and aligned\");"));
    }
    for c in unchecked.captures_iter(snippet) {
        push(format!("assert!({} < {}.len(), \"index out of bounds\");", c[2].trim(), &c[1]));
    }
    for c in to_bool.captures_iter(snippet) {
        push(format!("assert!({} <= 1, \"byte is not a valid bool\");", c[1].trim()));
    }
    out
}

fn summary(prompt: &PromptRecord) -> String {
    let f = prompt.var("fn");
    let location = if f.is_empty() { "at file scope".to_string() } else { format!("in `{f}`") };
    let ops = prompt.var("ops");
    let kinds = prompt.var("ub_kinds");
    format!(
        "{} is an unsafe region {location} performing {}; the detector reports {}.",
        prompt.var("region_ref"),
        if ops.is_empty() { "no recognized unsafe operation" } else { ops },
        if kinds.is_empty() { "nothing inside it" } else { kinds },
    )
}

const ARRANGEMENTS: [&[usize]; 15] = [
    &[0, 1, 2], &[0, 2, 1], &[1, 0, 2], &[1, 2, 0], &[2, 0, 1], &[2, 1, 0],
    &[0, 1], &[0, 2], &[1, 0], &[1, 2], &[2, 0], &[2, 1],
    &[0], &[1], &[2],
];

fn plan(prompt: &PromptRecord) -> String {
    let k: usize = prompt.var("k").parse().unwrap_or(1).max(1);
    let kb = prompt.var("kb") == "on";
    let features: Vec<(String, Vec<FixStrategy>)> = prompt
        .var("features")
        .lines()
        .filter_map(|line| {
            let (r, order) = line.split_once('\t')?;
            let order: Vec<FixStrategy> = order.split(',').filter_map(|s| s.trim().parse().ok()).collect();
            (order.len() == 3).then(|| (r.trim().to_string(), order))
        })
        .collect();
    if features.is_empty() {
        return "I could not identify a region to repair.".into();
    }
    let mut out = String::new();
    for (m, arrangement) in ARRANGEMENTS.iter().take(k).enumerate() {
        out.push_str(&format!("SOLUTION {}\n", m + 1));
        let mut n = 1;
        for (region, order) in &features {
            if kb {
                out.push_str(&format!("STEP {n}: REASON {region} :: look up repairs of similar unsafe code\n"));
                n += 1;
            }
            for &i in arrangement.iter() {
                let (agent, what) = match order[i] {
                    FixStrategy::SafeAlternative => ("SAFE_REPLACE", "replace the unsafe operation with a safe equivalent"),
                    FixStrategy::AssertionGuard => ("ADD_ASSERTION", "guard the unsafe operation with assertions"),
                    FixStrategy::SemanticModification => ("MODIFY_SEMANTICS", "rewrite the faulty logic around the unsafe operation"),
                };
                out.push_str(&format!("STEP {n}: {agent} {region} :: {what}\n"));
                n += 1;
            }
        }
        out.push('\n');
    }
    out
}
