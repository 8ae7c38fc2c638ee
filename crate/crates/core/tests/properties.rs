use std::path::{Path, PathBuf};

use proptest::prelude::*;

use ubmend_core::agents::PatchRecord;
use ubmend_core::classifier::locate_unsafe_regions;
use ubmend_core::detector::normalize_diagnostic;
use ubmend_core::fast::{AgentKind, RepairSolution, RepairStep, SolutionProvenance};
use ubmend_core::feedback::{rank_solutions, ExperienceLog, ScoreWeights};
use ubmend_core::kb::{extract_local, prune, vectorize, FeatureVector, DEFAULT_DIMS};
use ubmend_core::rollback::{select_rollback_target, simulate, RestorePolicy, RollbackTrigger};

fn rust_like() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            Just("fn f() {".to_string()),
            Just("}".to_string()),
            Just("unsafe {".to_string()),
            Just("let p = &x as *const u8;".to_string()),
            Just("*p;".to_string()),
            Just("(".to_string()),
            Just(")".to_string()),
            Just("\"s{\"".to_string()),
            Just("// c".to_string()),
            "[a-z]{1,4}",
        ],
        0..25,
    )
    .prop_map(|parts| parts.join("\n"))
}

proptest! {
    #[test]
    fn rollback_target_is_the_latest_minimum(counts in prop::collection::vec(0usize..20, 1..12)) {
        let t = select_rollback_target(&counts);
        let min = *counts.iter().min().unwrap();
        prop_assert_eq!(counts[t], min);
        prop_assert!(counts[t + 1..].iter().all(|&c| c > min));
    }

    #[test]
    fn adaptive_rollback_discards_no_more_than_baseline(counts in prop::collection::vec(0usize..20, 1..12)) {
        let trigger = RollbackTrigger::default();
        let a = simulate(&counts, &trigger, RestorePolicy::Adaptive);
        let b = simulate(&counts, &trigger, RestorePolicy::Baseline);
        prop_assert!(a.discarded_thoughts <= b.discarded_thoughts);
        prop_assert!(a.rollback_count <= b.rollback_count);
    }

    #[test]
    fn trigger_fires_on_doubling(min in 0usize..10, extra in 1usize..10) {
        let counts = [min, 2 * min + extra];
        prop_assert!(RollbackTrigger::default().fires(&counts));
    }

    #[test]
    fn patches_revert_exactly(text in "[ -~\n]{0,80}", a in 0usize..80, b in 0usize..80, after in "[ -~\n]{0,40}") {
        let (s, e) = (a.min(b).min(text.len()), a.max(b).min(text.len()));
        let patch = PatchRecord {
            file: PathBuf::from("src/main.rs"),
            before_span: (s, e),
            before_text: text[s..e].to_string(),
            after_text: after,
            agent: AgentKind::SafeReplace,
            rationale: String::new(),
        };
        let applied = patch.apply(&text).unwrap();
        prop_assert_eq!(patch.revert(&applied).unwrap(), text);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 8),
        b in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        let (x, y) = (FeatureVector { dims: a }, FeatureVector { dims: b });
        let c = x.cosine(&y);
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((c - y.cosine(&x)).abs() < 1e-12);
    }

    #[test]
    fn empty_experience_keeps_plan_order(n in 1usize..8) {
        let agents = [AgentKind::SafeReplace, AgentKind::AddAssertion, AgentKind::ModifySemantics];
        let plans: Vec<RepairSolution> = (0..n)
            .map(|i| RepairSolution {
                id: format!("S{}", i + 1),
                steps: vec![RepairStep::new(agents[i % 3], "R1", "fix")],
                source_features: vec!["R1".into()],
                provenance: SolutionProvenance::Generated,
            })
            .collect();
        let ranked = rank_solutions(plans.clone(), &FeatureVector::zeros(4), &ExperienceLog::in_memory(), &ScoreWeights::default());
        prop_assert_eq!(ranked, plans);
    }

    #[test]
    fn normalization_is_idempotent(text in "(alloc[0-9]{1,4}|<[0-9]{1,3}>|0x[0-9a-f]{4,8}|[ a-z]{1,5}){0,8}") {
        let once = normalize_diagnostic(&text);
        prop_assert_eq!(normalize_diagnostic(&once), once);
    }

    #[test]
    fn parsers_do_not_panic(src in rust_like()) {
        let _ = locate_unsafe_regions(&src, Path::new("src/main.rs"));
        if let Ok(ast) = extract_local(&src) {
            let v = vectorize(&ast, &prune(&ast, &[]));
            prop_assert_eq!(v.len(), DEFAULT_DIMS);
            prop_assert!(ast.nodes.iter().skip(1).all(|n| n.parent.is_some_and(|p| p < n.id)));
        }
    }
}
