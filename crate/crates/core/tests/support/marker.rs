//! A stand-in detector for loop tests: each `// errors: N` comment in the
//! package sources reports `N` dangling-pointer errors at its own line, and
//! a `// does not compile` comment makes the build fail.

use std::fs;
use std::path::Path;
use std::time::Duration;

use ubmend_core::detector::{DetectError, Detector, ToolOutput};

pub struct MarkerDetector;

impl Detector for MarkerDetector {
    fn execute(&self, dir: &Path, _timeout: Duration) -> Result<ToolOutput, DetectError> {
        let mut stderr = String::new();
        let mut files: Vec<_> = fs::read_dir(dir.join("src"))?.collect::<Result<_, _>>()?;
        files.sort_by_key(|e| e.file_name());
        for entry in files {
            let name = entry.file_name().to_string_lossy().into_owned();
            let text = fs::read_to_string(entry.path())?;
            if text.contains("// does not compile") {
                let stderr = "error[E0308]: mismatched types\nerror: could not compile `case`\n".to_string();
                return Ok(ToolOutput { stdout: String::new(), stderr, exit_status: 1 });
            }
            for (i, line) in text.lines().enumerate() {
                let Some(n) = line.split("// errors: ").nth(1).and_then(|n| n.trim().parse::<usize>().ok()) else {
                    continue;
                };
                for _ in 0..n {
                    stderr.push_str(&format!(
                        "error: Undefined Behavior: memory access failed: pointer is dangling\n  --> src/{name}:{}:5\n\n",
                        i + 1
                    ));
                }
            }
        }
        let exit_status = if stderr.is_empty() { 0 } else { 1 };
        Ok(ToolOutput { stdout: String::new(), stderr, exit_status })
    }

    fn name(&self) -> &str {
        "marker"
    }
}
