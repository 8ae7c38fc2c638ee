//! Recorded detector output keyed by source fingerprint.
//!
//! Lets the whole pipeline run offline once a real detector pass has been
//! captured, and keeps bench output independent of the host toolchain.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DetectError, Detector, ToolOutput};

/// One line of a detection transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub fingerprint: String,
    pub stdout: String,
    pub stderr: String,
    pub exit_status: i32,
}

/// SHA-256 over every `.rs` file below `dir` (sorted by relative path),
/// skipping build output.
pub fn source_fingerprint(dir: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    collect_sources(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let bytes = fs::read(dir.join(&rel))?;
        hasher.update(rel.to_string_lossy().replace('\\', "/").as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_sources(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let ty = entry.file_type()?;
        if ty.is_dir() {
            if entry.file_name() == "target" {
                continue;
            }
            collect_sources(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

fn parse_records(path: &Path) -> Result<Vec<DetectionRecord>, DetectError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| DetectError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        out.push(record);
    }
    Ok(out)
}

/// Serves recorded outputs; never spawns a process.
#[derive(Debug, Default, Clone)]
pub struct ReplayDetector {
    records: BTreeMap<String, ToolOutput>,
}

impl ReplayDetector {
    pub fn load(path: &Path) -> Result<Self, DetectError> {
        let mut det = Self::default();
        for r in parse_records(path)? {
            det.insert(r);
        }
        Ok(det)
    }

    pub fn insert(&mut self, r: DetectionRecord) {
        self.records.insert(
            r.fingerprint,
            ToolOutput { stdout: r.stdout, stderr: r.stderr, exit_status: r.exit_status },
        );
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Detector for ReplayDetector {
    fn execute(&self, dir: &Path, _timeout: Duration) -> Result<ToolOutput, DetectError> {
        let fp = source_fingerprint(dir)?;
        self.records.get(&fp).cloned().ok_or(DetectError::ReplayMiss(fp))
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Passes calls through to `inner` and remembers every output.
pub struct RecordingDetector<D> {
    inner: D,
    seen: Mutex<BTreeMap<String, DetectionRecord>>,
}

impl<D: Detector> RecordingDetector<D> {
    pub fn new(inner: D) -> Self {
        Self { inner, seen: Mutex::new(BTreeMap::new()) }
    }

    /// Merges with any records already at `path` and rewrites it sorted by fingerprint.
    pub fn save(&self, path: &Path) -> Result<usize, DetectError> {
        let mut all: BTreeMap<String, DetectionRecord> = BTreeMap::new();
        if path.exists() {
            for r in parse_records(path)? {
                all.insert(r.fingerprint.clone(), r);
            }
        }
        let seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
        all.extend(seen.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut file = fs::File::create(path)?;
        for r in all.values() {
            let line = serde_json::to_string(r).expect("detection record serializes");
            writeln!(file, "{line}")?;
        }
        Ok(all.len())
    }
}

impl<D: Detector> Detector for RecordingDetector<D> {
    fn execute(&self, dir: &Path, timeout: Duration) -> Result<ToolOutput, DetectError> {
        let fp = source_fingerprint(dir)?;
        let out = self.inner.execute(dir, timeout)?;
        let record = DetectionRecord {
            fingerprint: fp.clone(),
            stdout: out.stdout.clone(),
            stderr: out.stderr.clone(),
            exit_status: out.exit_status,
        };
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).insert(fp, record);
        Ok(out)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl Detector for Fixed {
        fn execute(&self, _: &Path, _: Duration) -> Result<ToolOutput, DetectError> {
            Ok(ToolOutput { stdout: "7\n".into(), stderr: String::new(), exit_status: 0 })
        }

        fn name(&self) -> &str {
            "fixed"
        }
    }

    #[test]
    fn record_then_replay_round_trips() {
        let pkg = tempfile::tempdir().unwrap();
        fs::create_dir_all(pkg.path().join("src")).unwrap();
        fs::write(pkg.path().join("src/main.rs"), "fn main() {}\n").unwrap();
        let rec = RecordingDetector::new(Fixed);
        let out = rec.execute(pkg.path(), Duration::from_secs(1)).unwrap();
        let log = pkg.path().join("det.jsonl");
        assert_eq!(rec.save(&log).unwrap(), 1);
        let replay = ReplayDetector::load(&log).unwrap();
        assert_eq!(replay.execute(pkg.path(), Duration::from_secs(1)).unwrap(), out);

        fs::write(pkg.path().join("src/main.rs"), "fn main() { }\n").unwrap();
        assert!(matches!(
            replay.execute(pkg.path(), Duration::from_secs(1)),
            Err(DetectError::ReplayMiss(_))
        ));
    }

    #[test]
    fn fingerprint_ignores_build_output() {
        let pkg = tempfile::tempdir().unwrap();
        fs::create_dir_all(pkg.path().join("src")).unwrap();
        fs::write(pkg.path().join("src/main.rs"), "fn main() {}\n").unwrap();
        let before = source_fingerprint(pkg.path()).unwrap();
        fs::create_dir_all(pkg.path().join("target/debug")).unwrap();
        fs::write(pkg.path().join("target/debug/build.rs"), "junk").unwrap();
        assert_eq!(before, source_fingerprint(pkg.path()).unwrap());
    }
}
