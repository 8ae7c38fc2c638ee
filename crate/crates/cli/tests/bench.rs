use std::path::Path;

use proptest::prelude::*;

use ubmend::bench::{compute_ci, render_report, BenchError, BenchReport, CaseResult, DatasetManifest, ReportFormat};
use ubmend_core::detector::UbKind;

fn case(id: &str, kind: UbKind, passed: bool, accepted: bool, times: (Option<f64>, Option<f64>)) -> CaseResult {
    CaseResult {
        id: id.into(),
        expected_kind: kind,
        detected: vec![kind],
        verdict: if accepted { "semantic_pass" } else if passed { "pass" } else { "failed" }.into(),
        passed,
        accepted,
        baseline_errors: Some(1),
        final_errors: Some(usize::from(!passed)),
        counts: vec![1, usize::from(!passed)],
        rollbacks: 0,
        solution: Some("S1".into()),
        tokens: 10,
        time_kb: times.1,
        time_no_kb: times.0,
        error: None,
    }
}

fn corpus() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

#[test]
fn wilson_reference_values() {
    let (lo, hi) = compute_ci(9, 10, 0.95);
    assert!((lo - 0.595_85).abs() < 1e-5, "{lo}");
    assert!((hi - 0.982_13).abs() < 1e-5, "{hi}");
    assert_eq!(compute_ci(0, 10, 0.95).0, 0.0);
    assert_eq!(compute_ci(10, 10, 0.95).1, 1.0);
    assert!((compute_ci(0, 10, 0.95).1 - 0.277_533).abs() < 1e-6);
}

#[test]
#[should_panic]
fn wilson_rejects_more_successes_than_trials() {
    compute_ci(3, 2, 0.95);
}

proptest! {
    #[test]
    fn wilson_interval_brackets_the_rate(n in 1usize..500, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let s = ((n as f64) * frac).round() as usize;
        let (lo, hi) = compute_ci(s, n, conf);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn wider_confidence_gives_wider_interval(n in 1usize..200, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as usize;
        let (a, b) = compute_ci(s, n, 0.90);
        let (c, d) = compute_ci(s, n, 0.99);
        prop_assert!(c <= a + 1e-12 && b <= d + 1e-12);
    }

    #[test]
    fn exec_never_exceeds_pass(flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let cases = flags
            .iter()
            .enumerate()
            .map(|(i, &(p, a))| case(&format!("c{i}"), UbKind::Alloc, p, p && a, (None, None)))
            .collect();
        let r = BenchReport::from_cases(cases);
        prop_assert!(r.exec_rate <= r.pass_rate);
        prop_assert_eq!(r.per_kind.iter().map(|k| k.cases).sum::<usize>(), r.total);
    }
}

#[test]
fn per_kind_rows_average_times() {
    let r = BenchReport::from_cases(vec![
        case("a", UbKind::Alloc, true, true, (Some(2.0), Some(1.0))),
        case("b", UbKind::Alloc, true, false, (Some(4.0), None)),
        case("c", UbKind::DataRace, false, false, (None, None)),
    ]);
    assert_eq!((r.total, r.passed, r.accepted), (3, 2, 1));
    let alloc = r.per_kind.iter().find(|k| k.kind == UbKind::Alloc).unwrap();
    assert_eq!((alloc.cases, alloc.passed, alloc.accepted), (2, 2, 1));
    assert_eq!(alloc.avg_time_no_kb, Some(3.0));
    assert_eq!(alloc.avg_time_kb, Some(1.0));
    let race = r.per_kind.iter().find(|k| k.kind == UbKind::DataRace).unwrap();
    assert_eq!(race.avg_time_kb, None);
}

#[test]
fn table_has_kind_rows_and_rates() {
    let r = BenchReport::from_cases(vec![
        case("a", UbKind::Alloc, true, true, (Some(2.0), Some(1.0))),
        case("b", UbKind::DataRace, true, false, (Some(4.0), None)),
    ]);
    let table = render_report(&r, ReportFormat::Table);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("UB kind"));
    assert!(lines[0].ends_with("Avg time/s (KB)"));
    assert!(lines[1].starts_with("-------"));
    assert!(lines.iter().any(|l| l.starts_with("alloc") && l.contains("2.00") && l.ends_with("1.00")));
    assert!(lines.iter().any(|l| l.starts_with("data race") && l.ends_with('-')));
    assert!(table.contains("pass rate 100.0%"));
    assert!(table.contains("exec rate 50.0%"));
}

#[test]
fn json_report_round_trips() {
    let r = BenchReport::from_cases(vec![case("a", UbKind::Panic, true, false, (Some(1.5), Some(0.5)))]);
    let text = render_report(&r, ReportFormat::Json);
    let back: BenchReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn report_format_parses() {
    assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
    assert_eq!("table".parse::<ReportFormat>().unwrap(), ReportFormat::Table);
    assert!("xml".parse::<ReportFormat>().is_err());
}

#[test]
fn manifest_resolves_paths_against_its_directory() {
    let m = DatasetManifest::load(&corpus().join("manifest.jsonl")).unwrap();
    assert_eq!(m.cases.len(), 12);
    assert!(m.cases.iter().all(|c| c.path.is_file()));
    assert!(m.cases.iter().all(|c| c.reference.as_ref().is_some_and(|r| r.is_dir())));
}

#[test]
fn manifest_errors() {
    let base = corpus();
    assert!(matches!(DatasetManifest::parse("\n\n", &base), Err(BenchError::EmptyManifest)));
    assert!(matches!(DatasetManifest::parse("{not json", &base), Err(BenchError::Manifest { line: 1, .. })));
    let line = r#"{"id":"x","path":"alloc/main.rs","ub_kind":"Alloc"}"#;
    assert!(matches!(DatasetManifest::parse(&format!("{line}\n{line}"), &base), Err(BenchError::DuplicateId(_))));
    let missing = r#"{"id":"x","path":"nowhere.rs","ub_kind":"Alloc"}"#;
    assert!(matches!(DatasetManifest::parse(missing, &base), Err(BenchError::MissingPath { .. })));
}
