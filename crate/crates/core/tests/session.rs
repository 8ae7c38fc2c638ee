#[path = "support/marker.rs"]
mod marker;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use marker::MarkerDetector;
use ubmend_core::classifier::{classify_ops, locate_unsafe_regions, scope_facts, CodeFeature};
use ubmend_core::detector::{run_detection, UbKind, DEFAULT_TIMEOUT};
use ubmend_core::fast::{AgentKind, RepairSolution, RepairStep, SolutionProvenance};
use ubmend_core::feedback::ExperienceLog;
use ubmend_core::kb::FeatureVector;
use ubmend_core::provider::{MockRule, Provider};
use ubmend_core::slow::{run_session, Clock, SessionConfig, SessionContext, SessionOutcome, Verdict};
use ubmend_core::target::{TargetPackage, DEFAULT_TOKEN_BUDGET};

const CONVERGING: &str = "fn main() {
    let v = vec![1u32, 2, 3];
    let p = v.as_ptr();
    // errors: 3
    let x = unsafe { *p.add(1) };
    println!(\"{x}\");
}
";

const DIVERGING: &str = "fn a(p: *const u32) -> u32 {
    // errors: 0
    unsafe { *p }
}

fn b(p: *const u32) -> u32 {
    // errors: 0
    unsafe { *p }
}

fn c(p: *const u32) -> u32 {
    // errors: 0
    unsafe { *p }
}

fn d(p: *const u32) -> u32 {
    // errors: 0
    unsafe { *p }
}

fn main() {
    let v = [1u32];
    // errors: 1
    println!(\"{}\", a(v.as_ptr()) + b(v.as_ptr()) + c(v.as_ptr()) + d(v.as_ptr()));
}
";

fn rule(agent: &str, when: Option<&str>, from: &str, to: &str) -> MockRule {
    MockRule {
        agent: Some(agent.into()),
        when: when.map(str::to_string),
        find: format!("// errors: {from}"),
        replace: format!("// errors: {to}"),
    }
}

fn features(src: &str) -> Vec<CodeFeature> {
    let facts = scope_facts(src).unwrap();
    locate_unsafe_regions(src, Path::new("src/main.rs"))
        .unwrap()
        .into_iter()
        .map(|region| CodeFeature {
            op_kinds: classify_ops(&region, &facts).unwrap_or_default(),
            region,
            ub_kinds: BTreeSet::from([UbKind::DanglingPointer]),
            context_summary: String::new(),
        })
        .collect()
}

fn solution(id: &str, steps: &[(AgentKind, &str)]) -> RepairSolution {
    RepairSolution {
        id: id.into(),
        steps: steps.iter().map(|(a, r)| RepairStep::new(*a, r, "apply the edit")).collect(),
        source_features: vec!["R1".into()],
        provenance: SolutionProvenance::Generated,
    }
}

fn session(src: &str, rules: Vec<MockRule>, solutions: Vec<RepairSolution>, budget: usize) -> (SessionOutcome, String) {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("case.rs");
    fs::write(&file, src).unwrap();
    let target = TargetPackage::load(&file, DEFAULT_TOKEN_BUDGET).unwrap();
    let copy = target.working_copy(&dir.path().join("session")).unwrap();
    let baseline = run_detection(&MarkerDetector, &copy.dir, DEFAULT_TIMEOUT).unwrap();
    let provider = Provider::mock(rules);
    let feats = features(src);
    let vector = FeatureVector::zeros(8);
    let log = ExperienceLog::in_memory();
    let ctx = SessionContext {
        copy: &copy,
        detector: &MarkerDetector,
        provider: &provider,
        features: &feats,
        vector: &vector,
        kb: None,
        experience: Some(&log),
        reference: None,
        config: SessionConfig { budget, clock: Clock::Logical, ..SessionConfig::default() },
    };
    let outcome = run_session(&ctx, &baseline, solutions);
    let on_disk = copy.read(Path::new("src/main.rs")).unwrap();
    (outcome, on_disk)
}

fn converging() -> (SessionOutcome, String) {
    let rules = vec![
        rule("ModifySemantics", None, "3", "1"),
        rule("SafeReplace", None, "1", "5"),
        rule("ModifySemantics", None, "1", "2"),
        rule("SafeReplace", None, "2", "0"),
    ];
    let plans = vec![
        solution("S1", &[(AgentKind::ModifySemantics, "R1"), (AgentKind::SafeReplace, "R1")]),
        solution("S2", &[(AgentKind::Reason, "R1"), (AgentKind::ModifySemantics, "R1"), (AgentKind::SafeReplace, "R1")]),
    ];
    session(CONVERGING, rules, plans, 5)
}

#[test]
fn fluctuating_trace_converges() {
    let (out, on_disk) = converging();
    assert_eq!(out.trace.counts, vec![3, 1, 5, 2, 0]);
    assert_eq!(out.trace.thoughts.len(), 4);
    assert_eq!(out.verdict, Verdict::Pass);
    assert_eq!(out.solution_id.as_deref(), Some("S2"));
    assert_eq!(out.rollback.rollback_count, 1);
    assert!(on_disk.contains("// errors: 0"));
    assert_eq!(out.final_source.values().next().unwrap(), &on_disk);
    assert_eq!(out.applied_patches().len(), 3);
}

#[test]
fn diverging_trace_ends_at_the_best_snapshot() {
    let rules = ["a", "b", "c", "d"]
        .iter()
        .zip(["2", "3", "5", "8"])
        .map(|(f, to)| rule("ModifySemantics", Some(&format!(r"fn {f}\(")), "0", to))
        .collect();
    let plans = (1..=4).map(|i| solution(&format!("S{i}"), &[(AgentKind::ModifySemantics, &format!("R{i}"))])).collect();
    let (out, on_disk) = session(DIVERGING, rules, plans, 5);
    assert_eq!(out.trace.counts, vec![1, 3, 4, 6, 9]);
    assert_eq!(out.verdict, Verdict::Failed);
    assert_eq!(on_disk, DIVERGING);
    assert_eq!(out.final_index, 0);
    assert!(out.rollback.rollback_count >= 1);
    assert!(out.applied_patches().is_empty());
    assert_eq!(out.experience.len(), 4);
    assert!(out.experience.iter().all(|r| !r.triplet.accuracy));
}

#[test]
fn clean_target_passes_without_thoughts() {
    let src = "fn main() {\n    println!(\"ok\");\n}\n";
    let (out, _) = session(src, Vec::new(), vec![solution("S1", &[(AgentKind::SafeReplace, "R1")])], 5);
    assert_eq!(out.verdict, Verdict::Pass);
    assert!(out.trace.thoughts.is_empty());
    assert_eq!(out.detections, 1);
}

#[test]
fn budget_caps_the_number_of_thoughts() {
    let rules = vec![rule("ModifySemantics", None, "3", "2"), rule("ModifySemantics", None, "2", "2\n    // errors: 0")];
    let plans = vec![solution(
        "S1",
        &[(AgentKind::ModifySemantics, "R1"), (AgentKind::ModifySemantics, "R1"), (AgentKind::ModifySemantics, "R1")],
    )];
    let (out, _) = session(CONVERGING, rules, plans, 2);
    assert_eq!(out.trace.thoughts.len(), 2);
    assert!(out.trace.counts.len() <= out.trace.iteration_budget + 1);
    assert_eq!(out.verdict, Verdict::BudgetExhausted);
}

#[test]
fn non_compiling_patch_is_reverted() {
    let rules = vec![MockRule {
        agent: Some("ModifySemantics".into()),
        when: None,
        find: "// errors: 3".into(),
        replace: "// errors: 0 // does not compile".into(),
    }];
    let (out, on_disk) = session(CONVERGING, rules, vec![solution("S1", &[(AgentKind::ModifySemantics, "R1")])], 5);
    assert_eq!(out.trace.counts, vec![3, 3]);
    assert!(out.trace.thoughts[0].patch.is_none());
    assert!(out.trace.thoughts[0].failure.as_deref().unwrap().contains("does not compile"));
    assert_eq!(on_disk, CONVERGING);
    assert_eq!(out.verdict, Verdict::Failed);
}

#[test]
fn agent_failure_keeps_the_previous_count() {
    let (out, _) = session(CONVERGING, Vec::new(), vec![solution("S1", &[(AgentKind::SafeReplace, "R1")])], 5);
    assert_eq!(out.trace.counts, vec![3, 3]);
    assert!(out.trace.thoughts[0].failure.is_some());
}

#[test]
fn replayed_sessions_serialize_identically() {
    let a = serde_json::to_string(&converging().0).unwrap();
    let b = serde_json::to_string(&converging().0).unwrap();
    assert_eq!(a, b);
}
