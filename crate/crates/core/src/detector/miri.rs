//! Subprocess backend driving `cargo miri run`.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{DetectError, Detector, ToolOutput};

#[derive(Debug, Clone)]
pub struct MiriDetector {
    toolchain: String,
    miriflags: Option<String>,
}

impl Default for MiriDetector {
    fn default() -> Self {
        Self { toolchain: "nightly".into(), miriflags: None }
    }
}

impl MiriDetector {
    pub fn new(toolchain: impl Into<String>) -> Self {
        Self { toolchain: toolchain.into(), miriflags: None }
    }

    pub fn with_miriflags(mut self, flags: impl Into<String>) -> Self {
        self.miriflags = Some(flags.into());
        self
    }

    /// Checks that `cargo miri` is installed for the configured toolchain.
    pub fn probe(&self) -> Result<String, DetectError> {
        let output = Command::new("cargo")
            .arg(format!("+{}", self.toolchain))
            .args(["miri", "--version"])
            .output()
            .map_err(|e| DetectError::ToolMissing(format!("cannot run cargo: {e}")))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(DetectError::ToolMissing(
                stderr.lines().next().unwrap_or("cargo miri unavailable").to_string(),
            ));
        }
        Ok(String::from_utf8_lossy(&output.stdout).trim().to_string())
    }
}

fn drain<R: Read + Send + 'static>(reader: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = reader {
            let _ = r.read_to_end(&mut buf);
        }
        buf
    })
}

fn tool_missing(stderr: &str) -> Option<String> {
    let markers = ["no such command: `miri`", "is not installed", "toolchain '", "error: no such subcommand"];
    stderr
        .lines()
        .find(|l| markers.iter().any(|m| l.contains(m)) && !l.contains("-->"))
        .map(|l| l.trim().to_string())
}

impl Detector for MiriDetector {
    fn execute(&self, dir: &Path, timeout: Duration) -> Result<ToolOutput, DetectError> {
        let mut cmd = Command::new("cargo");
        cmd.arg(format!("+{}", self.toolchain))
            .args(["miri", "run", "-q"])
            .current_dir(dir)
            .env("CARGO_TERM_COLOR", "never")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(flags) = &self.miriflags {
            cmd.env("MIRIFLAGS", flags);
        }
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DetectError::ToolMissing("cargo not found on PATH".into()),
            _ => DetectError::Io(e),
        })?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());
        let status = match child.wait_timeout(timeout)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(DetectError::Timeout(timeout));
            }
        };
        let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
        if !status.success() {
            if let Some(msg) = tool_missing(&stderr) {
                return Err(DetectError::ToolMissing(msg));
            }
        }
        Ok(ToolOutput { stdout, stderr, exit_status: status.code().unwrap_or(-1) })
    }

    fn name(&self) -> &str {
        "miri"
    }
}
