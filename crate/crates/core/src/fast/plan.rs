//! The line-oriented plan format.
//!
//! ```text
//! SOLUTION 1
//! STEP 1: SAFE_REPLACE R1 :: use bounds-checked indexing
//! STEP 2: ADD_ASSERTION R1 :: check alignment first
//! ```
//!
//! Parsing is lenient: headers and agent names ignore case and separators,
//! unrecognized lines are skipped, and steps before the first header start
//! an implicit solution.

use std::sync::OnceLock;

use regex::Regex;

use super::{AgentKind, RepairStep};

/// Steps of each solution found in `text`, dropping solutions with no valid step.
pub fn parse_plan(text: &str) -> Vec<Vec<RepairStep>> {
    static STEP: OnceLock<Regex> = OnceLock::new();
    static HEADER: OnceLock<Regex> = OnceLock::new();
    let step = STEP.get_or_init(|| {
        Regex::new(r"(?i)^\s*[-*]?\s*STEP\s*\d+\s*[:.)]\s*`?([A-Za-z_ ]+?)`?\s+`?(R\d+)`?\s*(?:::\s*(.*?))?\s*$").unwrap()
    });
    let header = HEADER.get_or_init(|| Regex::new(r"(?i)^\s*[#*]*\s*SOLUTION\s*\d*\s*[:*]*\s*$").unwrap());
    let mut solutions: Vec<Vec<RepairStep>> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if header.is_match(line) {
            solutions.push(Vec::new());
            open = true;
            continue;
        }
        let Some(caps) = step.captures(line) else { continue };
        let Ok(agent) = caps[1].trim().parse::<AgentKind>() else { continue };
        let instruction = caps.get(3).map_or("", |m| m.as_str()).trim();
        if !open {
            solutions.push(Vec::new());
            open = true;
        }
        let instruction = if instruction.is_empty() { agent.default_instruction() } else { instruction };
        solutions.last_mut().expect("opened above").push(RepairStep::new(agent, &caps[2].to_ascii_uppercase(), instruction));
    }
    solutions.retain(|s| !s.is_empty());
    solutions
}

/// Renders steps back into the plan format.
pub fn render_plan(solutions: &[Vec<RepairStep>]) -> String {
    let mut out = String::new();
    for (m, steps) in solutions.iter().enumerate() {
        out.push_str(&format!("SOLUTION {}\n", m + 1));
        for (n, s) in steps.iter().enumerate() {
            out.push_str(&format!("STEP {}: {} {} :: {}\n", n + 1, s.agent.plan_name(), s.target, s.instruction));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenient_parsing() {
        let text = "Here is my plan.\n**Solution 1**\nStep 1. safe replace r1 :: use get()\nSTEP 2: Frobnicate R1 :: nonsense\n\nSOLUTION 2\nSTEP 1: `MODIFY_SEMANTICS` `R2`\nSOLUTION 3\nnothing here\n";
        let plans = parse_plan(text);
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].len(), 1);
        assert_eq!(plans[0][0].agent, AgentKind::SafeReplace);
        assert_eq!(plans[0][0].target, "R1");
        assert_eq!(plans[1][0].agent, AgentKind::ModifySemantics);
        assert!(!plans[1][0].instruction.is_empty());
    }

    #[test]
    fn implicit_first_solution_and_round_trip() {
        let plans = parse_plan("STEP 1: ADD_ASSERTION R1 :: guard it\nSTEP 2: REASON R1 :: look up\n");
        assert_eq!(plans.len(), 1);
        assert_eq!(parse_plan(&render_plan(&plans)), plans);
        assert!(parse_plan("no steps at all").is_empty());
    }
}
