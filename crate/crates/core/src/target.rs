//! Repair targets and their isolated working copies.
//!
//! A target is either a single `.rs` file or a cargo package directory.
//! Repairs never touch the original: everything happens in a working copy
//! under a session directory laid out as `work/` plus `snapshots/<index>/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Default admissible source size in provider tokens.
pub const DEFAULT_TOKEN_BUDGET: usize = 16_000;

const SINGLE_FILE_MANIFEST: &str =
    "[package]\nname = \"case\"\nversion = \"0.1.0\"\nedition = \"2021\"\n\n[workspace]\n";

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("target `{0}` does not exist")]
    NotFound(PathBuf),
    #[error("`{0}` is neither a .rs file nor a cargo package")]
    NotRust(PathBuf),
    #[error("package `{0}` has no .rs sources under src/")]
    NoSources(PathBuf),
    #[error("target needs ~{estimated} tokens, budget is {budget}")]
    TokenBudgetExceeded { estimated: usize, budget: usize },
    #[error("i/o error on `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TargetError + '_ {
    move |source| TargetError::Io { path: path.to_path_buf(), source }
}

/// Rough provider token estimate: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetLayout {
    SingleFile,
    Package,
}

#[derive(Debug, Clone)]
pub struct TargetPackage {
    pub root_path: PathBuf,
    /// Source files relative to the package root (`src/main.rs` for single files).
    pub entry_files: Vec<PathBuf>,
    pub token_budget: usize,
    pub layout: TargetLayout,
    sources: BTreeMap<PathBuf, String>,
}

impl TargetPackage {
    pub fn load(path: &Path, token_budget: usize) -> Result<Self, TargetError> {
        if !path.exists() {
            return Err(TargetError::NotFound(path.to_path_buf()));
        }
        let (root_path, layout, sources) = if path.is_file() {
            if path.extension().is_none_or(|e| e != "rs") {
                return Err(TargetError::NotRust(path.to_path_buf()));
            }
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let mut sources = BTreeMap::new();
            sources.insert(PathBuf::from("src/main.rs"), text);
            (path.to_path_buf(), TargetLayout::SingleFile, sources)
        } else {
            if !path.join("Cargo.toml").is_file() {
                return Err(TargetError::NotRust(path.to_path_buf()));
            }
            let mut files = Vec::new();
            let src = path.join("src");
            if src.is_dir() {
                collect_rs(&src, &mut files).map_err(io_err(&src))?;
            }
            if files.is_empty() {
                return Err(TargetError::NoSources(path.to_path_buf()));
            }
            let mut sources = BTreeMap::new();
            for file in files {
                let text = fs::read_to_string(&file).map_err(io_err(&file))?;
                let rel = file.strip_prefix(path).unwrap_or(&file).to_path_buf();
                sources.insert(rel, text);
            }
            (path.to_path_buf(), TargetLayout::Package, sources)
        };
        let estimated: usize = sources.values().map(|s| estimate_tokens(s)).sum();
        if estimated > token_budget {
            return Err(TargetError::TokenBudgetExceeded { estimated, budget: token_budget });
        }
        Ok(Self {
            root_path,
            entry_files: sources.keys().cloned().collect(),
            token_budget,
            layout,
            sources,
        })
    }

    pub fn sources(&self) -> &BTreeMap<PathBuf, String> {
        &self.sources
    }

    pub fn estimated_tokens(&self) -> usize {
        self.sources.values().map(|s| estimate_tokens(s)).sum()
    }

    /// Copies the target into `<session_dir>/work`.
    pub fn working_copy(&self, session_dir: &Path) -> Result<WorkingCopy, TargetError> {
        let work = session_dir.join("work");
        fs::create_dir_all(&work).map_err(io_err(&work))?;
        match self.layout {
            TargetLayout::SingleFile => {
                let manifest = work.join("Cargo.toml");
                fs::write(&manifest, SINGLE_FILE_MANIFEST).map_err(io_err(&manifest))?;
            }
            TargetLayout::Package => copy_tree(&self.root_path, &work)?,
        }
        let copy = WorkingCopy { dir: work, session_dir: session_dir.to_path_buf(), files: self.entry_files.clone() };
        copy.restore(&self.sources)?;
        Ok(copy)
    }
}

fn collect_rs(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_rs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
    Ok(())
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), TargetError> {
    for entry in fs::read_dir(from).map_err(io_err(from))? {
        let entry = entry.map_err(io_err(from))?;
        let name = entry.file_name();
        if name == "target" || name == ".git" {
            continue;
        }
        let src = entry.path();
        let dst = to.join(&name);
        if src.is_dir() {
            fs::create_dir_all(&dst).map_err(io_err(&dst))?;
            copy_tree(&src, &dst)?;
        } else {
            fs::copy(&src, &dst).map_err(io_err(&src))?;
        }
    }
    Ok(())
}

/// An editable copy of a target's sources.
#[derive(Debug, Clone)]
pub struct WorkingCopy {
    pub dir: PathBuf,
    pub session_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl WorkingCopy {
    pub fn read(&self, rel: &Path) -> Result<String, TargetError> {
        let path = self.dir.join(rel);
        fs::read_to_string(&path).map_err(io_err(&path))
    }

    pub fn write(&self, rel: &Path, text: &str) -> Result<(), TargetError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, text).map_err(io_err(&path))
    }

    /// Current contents of every editable file.
    pub fn files(&self) -> Result<BTreeMap<PathBuf, String>, TargetError> {
        self.files.iter().map(|rel| Ok((rel.clone(), self.read(rel)?))).collect()
    }

    pub fn restore(&self, files: &BTreeMap<PathBuf, String>) -> Result<(), TargetError> {
        for (rel, text) in files {
            self.write(rel, text)?;
        }
        Ok(())
    }

    /// The file repairs default to: `src/main.rs`, else `src/lib.rs`, else the first source.
    pub fn primary_file(&self) -> PathBuf {
        ["src/main.rs", "src/lib.rs"]
            .iter()
            .map(PathBuf::from)
            .find(|p| self.files.contains(p))
            .or_else(|| self.files.first().cloned())
            .unwrap_or_else(|| PathBuf::from("src/main.rs"))
    }

    pub fn snapshots_dir(&self) -> PathBuf {
        self.session_dir.join("snapshots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_file_maps_to_main() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("case.rs");
        fs::write(&file, "fn main() {}\n").unwrap();
        let target = TargetPackage::load(&file, DEFAULT_TOKEN_BUDGET).unwrap();
        assert_eq!(target.entry_files, vec![PathBuf::from("src/main.rs")]);
        let session = tempfile::tempdir().unwrap();
        let copy = target.working_copy(session.path()).unwrap();
        assert_eq!(copy.read(Path::new("src/main.rs")).unwrap(), "fn main() {}\n");
        assert!(copy.dir.join("Cargo.toml").is_file());
        copy.write(Path::new("src/main.rs"), "fn main() { }\n").unwrap();
        assert_eq!(fs::read_to_string(&file).unwrap(), "fn main() {}\n");
    }

    #[test]
    fn rejects_oversized_and_non_rust_targets() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("big.rs");
        fs::write(&file, "x".repeat(41)).unwrap();
        match TargetPackage::load(&file, 10) {
            Err(TargetError::TokenBudgetExceeded { estimated: 11, budget: 10 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let txt = dir.path().join("notes.txt");
        fs::write(&txt, "hi").unwrap();
        assert!(matches!(TargetPackage::load(&txt, 10), Err(TargetError::NotRust(_))));
        assert!(matches!(
            TargetPackage::load(&dir.path().join("missing.rs"), 10),
            Err(TargetError::NotFound(_))
        ));
    }

    #[test]
    fn package_sources_are_relative_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("Cargo.toml"), SINGLE_FILE_MANIFEST).unwrap();
        fs::create_dir_all(dir.path().join("src/util")).unwrap();
        fs::write(dir.path().join("src/main.rs"), "mod util;\nfn main() {}\n").unwrap();
        fs::write(dir.path().join("src/util/mod.rs"), "pub fn f() {}\n").unwrap();
        let target = TargetPackage::load(dir.path(), DEFAULT_TOKEN_BUDGET).unwrap();
        assert_eq!(
            target.entry_files,
            vec![PathBuf::from("src/main.rs"), PathBuf::from("src/util/mod.rs")]
        );
    }
}
