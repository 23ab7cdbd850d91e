//! Output directories are built in a hidden sibling and renamed into place
//! only on success, so a failed run leaves nothing behind.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tempfile::TempDir;

pub struct Staged {
    tmp: TempDir,
    dest: PathBuf,
}

impl Staged {
    /// Fails when `dest` exists and is not an empty directory.
    pub fn new(dest: &Path) -> Result<Self> {
        if dest.exists() {
            let empty = dest.is_dir()
                && std::fs::read_dir(dest)
                    .with_context(|| format!("reading {}", dest.display()))?
                    .next()
                    .is_none();
            if !empty {
                bail!("output {} already exists and is not an empty directory", dest.display());
            }
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = tempfile::Builder::new()
            .prefix(".vrkit-staging-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn write(&self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.tmp.path().join(rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn commit(self) -> Result<()> {
        if self.dest.is_dir() {
            std::fs::remove_dir(&self.dest).with_context(|| format!("replacing {}", self.dest.display()))?;
        }
        let staged = self.tmp.keep();
        std::fs::rename(&staged, &self.dest).with_context(|| format!("moving output into {}", self.dest.display()))
    }
}

/// The record written as `run.json` and embedded in reports. The output
/// location is left out since the file already lives there.
#[derive(Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub args: &'a A,
}

pub fn run_config<A: Serialize>(subcommand: &'static str, args: &A) -> String {
    let cfg = RunConfig {
        tool: "vrkit",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        args,
    };
    serde_json::to_string(&cfg).expect("run config serializes")
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist or is not a file", path.display());
    }
    Ok(())
}

/// Directory that relative paths inside the manifest at `path` resolve against.
pub fn manifest_base(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
