use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ubmend::pipeline::FixReport;
use ubmend_core::detector::MiriDetector;
use ubmend_core::slow::Verdict;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

fn ubmend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubmend")).current_dir(corpus()).args(args).output().unwrap()
}

const REPLAY: &[&str] = &[
    "--provider",
    "replay",
    "--transcript",
    "provider.jsonl",
    "--detector",
    "replay:detections.jsonl",
    "--clock",
    "logical",
];

fn replayed_fix(case: &str, extra: &[&str]) -> Output {
    let path = format!("{case}/main.rs");
    let reference = format!("{case}/reference");
    let mut args = vec!["fix", path.as_str(), "--reference", reference.as_str()];
    args.extend_from_slice(REPLAY);
    args.extend_from_slice(extra);
    ubmend(&args)
}

#[test]
fn fix_prints_verdict_trace_and_diff() {
    let before = fs::read_to_string(corpus().join("dangling_pointer/main.rs")).unwrap();
    let out = replayed_fix("dangling_pointer", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("semantic_pass"));
    assert_eq!(lines.next(), Some("errors: 1 -> 0"));
    assert!(text.contains("--- src/main.rs ("));
    assert_eq!(fs::read_to_string(corpus().join("dangling_pointer/main.rs")).unwrap(), before);
}

#[test]
fn fix_json_report_parses() {
    let out = replayed_fix("unaligned_pointer", &["--report", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: FixReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert_eq!((report.baseline_errors, report.final_errors), (1, Some(0)));
    assert!(!report.outcome.triplet.as_ref().unwrap().accepted());
}

#[test]
fn fix_write_updates_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("main.rs");
    fs::copy(corpus().join("alloc/main.rs"), &file).unwrap();
    let reference = corpus().join("alloc/reference");
    let mut args = vec!["fix", file.to_str().unwrap(), "--reference", reference.to_str().unwrap(), "--write"];
    args.extend_from_slice(REPLAY);
    let out = ubmend(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_ne!(fs::read_to_string(&file).unwrap(), fs::read_to_string(corpus().join("alloc/main.rs")).unwrap());
}

#[test]
fn ub_free_input_passes() {
    if MiriDetector::default().probe().is_err() {
        eprintln!("skipped: Miri is not installed");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("clean.rs");
    fs::write(&file, "fn main() {\n    let v = vec![1, 2, 3];\n    println!(\"{}\", v[1]);\n}\n").unwrap();
    let out = ubmend(&["fix", file.to_str().unwrap(), "--clock", "logical"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().next(), Some("pass"));
}

#[test]
fn missing_toolchain_is_reported() {
    let out = ubmend(&["fix", "alloc/main.rs", "--detector", "miri:no-such-toolchain-xyz"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
}

#[test]
fn bad_detector_spec_is_rejected() {
    let out = ubmend(&["fix", "alloc/main.rs", "--detector", "valgrind"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("bad detector spec"));
}

#[test]
fn missing_target_is_reported() {
    let out = ubmend(&["fix", "no/such/file.rs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    fs::write(&manifest, "\n").unwrap();
    let out = ubmend(&["bench", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("empty manifest"));
}

#[test]
fn bench_ablation_fills_both_timing_columns() {
    let mut args = vec!["bench", "manifest.jsonl", "--ablation"];
    args.extend_from_slice(REPLAY);
    let out = ubmend(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).take_while(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| !r.ends_with('-')), "{text}");
    assert!(text.contains("pass rate 100.0%"));
    assert!(text.contains("exec rate 83.3%"));
}
