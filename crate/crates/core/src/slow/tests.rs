use super::*;

fn trace(counts: &[usize]) -> ErrorTrace {
    ErrorTrace { counts: counts.to_vec(), thoughts: Vec::new(), iteration_budget: 5 }
}

#[test]
fn rollback_decision_examples() {
    assert!(should_rollback(&trace(&[1, 3, 4]), 3));
    assert!(!should_rollback(&trace(&[3, 1]), 3));
    assert!(should_rollback(&trace(&[3, 1, 5]), 3));
    assert!(!should_rollback(&trace(&[3, 1, 5, 2]), 3));
    assert!(!should_rollback(&trace(&[4]), 3));
}

#[test]
fn verdict_names() {
    assert_eq!(Verdict::Pass.to_string(), "pass");
    assert_eq!(serde_json::to_string(&Verdict::BudgetExhausted).unwrap(), "\"budget_exhausted\"");
    assert!(Verdict::SemanticPass.is_pass());
    assert!(!Verdict::Failed.is_pass());
}

#[test]
fn clock_parses() {
    assert_eq!("logical".parse::<Clock>().unwrap(), Clock::Logical);
    assert!("cpu".parse::<Clock>().is_err());
}
