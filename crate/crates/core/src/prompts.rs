//! Prompt templates with named `{placeholder}` slots.

use std::collections::BTreeMap;

pub const SUMMARY: &str = include_str!("../templates/summary.txt");
pub const PLAN: &str = include_str!("../templates/plan.txt");
pub const SAFE_REPLACE: &str = include_str!("../templates/safe_replace.txt");
pub const ADD_ASSERTION: &str = include_str!("../templates/add_assertion.txt");
pub const MODIFY_SEMANTICS: &str = include_str!("../templates/modify_semantics.txt");

pub const SYSTEM: &str = "You are an expert Rust engineer who repairs undefined behavior in unsafe code.";

/// Fills `{name}` slots in one pass, so substituted text is never rescanned.
/// Slots without a value are left as written.
pub fn render(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let slot = after.find('}').map(|close| &after[..close]).filter(|name| {
            !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') && vars.contains_key(*name)
        });
        match slot {
            Some(name) => {
                out.push_str(&vars[name]);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_is_single_pass() {
        let vars = BTreeMap::from([
            ("scope".to_string(), "fn f() { {errors} }".to_string()),
            ("errors".to_string(), "E".to_string()),
        ]);
        assert_eq!(render("{errors}: {scope} {unknown}", &vars), "E: fn f() { {errors} } {unknown}");
    }

    #[test]
    fn fix_templates_name_strategy_and_snippet() {
        for t in [SAFE_REPLACE, ADD_ASSERTION, MODIFY_SEMANTICS] {
            assert!(t.contains("{strategy}") && t.contains("{snippet}") && t.contains("{scope}"));
        }
    }
}
