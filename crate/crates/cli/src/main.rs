//! `ubmend fix <path>` and `ubmend bench <manifest>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ubmend::bench::{default_threads, render_report, run_bench, BenchOptions, DatasetManifest, ReportFormat};
use ubmend::pipeline::{fix_target, open_detector, FixOptions, FixReport, Resources};
use ubmend_core::detector::{Detector, RecordingDetector};
use ubmend_core::feedback::{ExperienceLog, ReferenceBundle};
use ubmend_core::kb::{AstMode, KnowledgeBase};
use ubmend_core::provider::{Provider, ProviderConfig, ProviderMode, DEFAULT_MODEL, DEFAULT_TEMPERATURE};
use ubmend_core::slow::{Clock, DEFAULT_BUDGET};

#[derive(Parser)]
#[command(name = "ubmend", version, about = "Repair undefined behavior in unsafe Rust, guided by Miri")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair one `.rs` file or cargo package.
    Fix {
        path: PathBuf,
        /// Reference bundle directory (expected_stdout.txt, expected_exit.txt, tests.cmd).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write the repaired sources back to the target.
        #[arg(long)]
        write: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run every case of a JSONL manifest and report the rates.
    Bench {
        manifest: PathBuf,
        /// Also run each case with the opposite knowledge-base setting to fill both timing columns.
        #[arg(long)]
        ablation: bool,
        /// Worker threads (default: logical CPUs, at most 8).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// replay, mock or live.
    #[arg(long, default_value = "mock")]
    provider: ProviderMode,
    #[arg(long, default_value = DEFAULT_MODEL)]
    model: String,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Fix thoughts allowed per session.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    max_iterations: usize,
    /// Candidate solutions requested from fast thinking.
    #[arg(long, default_value_t = ubmend_core::fast::DEFAULT_SOLUTIONS)]
    solutions: usize,
    /// Knowledge base file.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Disable the knowledge base and reasoning steps.
    #[arg(long)]
    no_kb: bool,
    /// Experience log file.
    #[arg(long)]
    experience: Option<PathBuf>,
    /// Replay source, or where to record provider exchanges in other modes.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Rule script for the mock provider.
    #[arg(long)]
    script: Option<PathBuf>,
    /// miri, miri:<toolchain> or replay:<path>.
    #[arg(long, default_value = "miri")]
    detector: String,
    /// Save every detection run to this transcript.
    #[arg(long)]
    record_detections: Option<PathBuf>,
    /// json or table.
    #[arg(long, default_value = "table")]
    report: ReportFormat,
    /// Detection timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// wall or logical.
    #[arg(long, default_value = "wall")]
    clock: Clock,
    /// Where syntax trees come from: provider or local.
    #[arg(long, default_value = "provider")]
    ast: String,
}

type Recorder = RecordingDetector<Box<dyn Detector>>;

struct Setup {
    detector: Arc<dyn Detector>,
    recorder: Option<(Arc<Recorder>, PathBuf)>,
    provider: Provider,
    kb: Option<KnowledgeBase>,
    experience: Option<ExperienceLog>,
    options: FixOptions,
}

impl Setup {
    fn new(c: &Common) -> Result<Self> {
        let inner = open_detector(&c.detector)?;
        let (detector, recorder): (Arc<dyn Detector>, _) = match &c.record_detections {
            Some(p) => {
                let r = Arc::new(RecordingDetector::new(inner));
                (r.clone(), Some((r, p.clone())))
            }
            None => (Arc::from(inner), None),
        };
        let config = ProviderConfig {
            mode: c.provider,
            model_name: c.model.clone(),
            temperature: c.temperature,
            transcript_path: c.transcript.clone(),
            script_path: c.script.clone(),
            ..ProviderConfig::default()
        };
        let provider = Provider::new(config).context("provider setup")?;
        let kb = match (&c.kb, c.no_kb) {
            (Some(p), false) => Some(KnowledgeBase::open(p).with_context(|| format!("opening {}", p.display()))?),
            (None, false) => Some(KnowledgeBase::in_memory()),
            (_, true) => None,
        };
        let experience = match &c.experience {
            Some(p) => Some(ExperienceLog::open(p).with_context(|| format!("opening {}", p.display()))?),
            None => None,
        };
        let ast_mode = match c.ast.as_str() {
            "provider" => AstMode::Provider,
            "local" => AstMode::LocalParser,
            other => bail!("unknown AST source `{other}` (provider or local)"),
        };
        if c.max_iterations == 0 {
            bail!("--max-iterations must be at least 1");
        }
        let options = FixOptions {
            budget: c.max_iterations,
            solutions: c.solutions,
            use_kb: !c.no_kb,
            timeout: Duration::from_secs(c.timeout),
            clock: c.clock,
            ast_mode,
            ..FixOptions::default()
        };
        Ok(Self { detector, recorder, provider, kb, experience, options })
    }

    fn resources(&self) -> Resources<'_> {
        Resources { detector: self.detector.as_ref(), provider: &self.provider, kb: self.kb.as_ref(), experience: self.experience.as_ref() }
    }

    fn save_transcripts(&self, c: &Common) -> Result<()> {
        if let Some((r, path)) = &self.recorder {
            r.save(path).with_context(|| format!("saving {}", path.display()))?;
        }
        if c.provider != ProviderMode::Replay {
            if let Some(path) = &c.transcript {
                self.provider.record_transcript(path).with_context(|| format!("saving {}", path.display()))?;
            }
        }
        Ok(())
    }
}

fn write_back(path: &Path, report: &FixReport) -> Result<()> {
    for (rel, text) in &report.outcome.final_source {
        let dest = if path.is_file() { path.to_path_buf() } else { path.join(rel) };
        std::fs::write(&dest, text).with_context(|| format!("writing {}", dest.display()))?;
    }
    Ok(())
}

fn print_fix(report: &FixReport, format: ReportFormat) {
    match format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(report).expect("report serializes")),
        ReportFormat::Table => {
            println!("{}", report.verdict);
            if report.baseline_errors > 0 {
                let counts: Vec<String> = report.outcome.trace.counts.iter().map(|c| c.to_string()).collect();
                println!("errors: {}", counts.join(" -> "));
                if let Some(note) = &report.outcome.note {
                    println!("note: {note}");
                }
                print!("{}", report.diff_summary());
            }
        }
    }
}

fn cmd_fix(path: &Path, reference: Option<&Path>, write: bool, common: &Common) -> Result<ExitCode> {
    let mut setup = Setup::new(common)?;
    let reference = reference.map(ReferenceBundle::load).transpose()?;
    let report = fix_target(path, reference.as_ref(), &setup.options, setup.resources())?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let records = report.outcome.experience.clone();
    let mut scratch = ExperienceLog::in_memory();
    let log = setup.experience.as_mut().unwrap_or(&mut scratch);
    for record in records {
        log.record(record, setup.kb.as_mut(), created)?;
    }
    setup.save_transcripts(common)?;
    if write && report.verdict.is_pass() {
        write_back(path, &report)?;
    }
    print_fix(&report, common.report);
    Ok(if report.verdict.is_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_bench(manifest: &Path, ablation: bool, jobs: Option<usize>, common: &Common) -> Result<ExitCode> {
    let manifest = DatasetManifest::load(manifest)?;
    let mut setup = Setup::new(common)?;
    setup.kb = setup.kb.as_ref().map(KnowledgeBase::frozen);
    setup.experience = setup.experience.as_ref().map(ExperienceLog::frozen);
    let opts = BenchOptions { fix: setup.options.clone(), ablation, threads: jobs.unwrap_or_else(default_threads) };
    let report = run_bench(&manifest, &opts, setup.resources())?;
    setup.save_transcripts(common)?;
    print!("{}", render_report(&report, common.report));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fix { path, reference, write, common } => cmd_fix(path, reference.as_deref(), *write, common),
        Command::Bench { manifest, ablation, jobs, common } => cmd_bench(manifest, *ablation, *jobs, common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
