//! Line-delimited JSON manifest: a versioned header record followed by one
//! record per item. Paths are relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::yolo::{parse_yolo_label, LabelError};
use crate::augment::Provenance;

const FORMAT: &str = "vrkit-manifest";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("{path}: {error}")]
    Label { path: PathBuf, error: LabelError },
}

impl ManifestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Unassigned => "unassigned",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unassigned" => Ok(Split::Unassigned),
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub image: PathBuf,
    pub label: PathBuf,
    #[serde(default)]
    pub split: Split,
    /// Stratification key, usually the class folder the source came from.
    #[serde(default)]
    pub group: String,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub items: Vec<ManifestItem>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    classes: Vec<String>,
}

impl DatasetManifest {
    pub fn new(classes: Vec<String>) -> Self {
        Self {
            classes,
            items: Vec::new(),
        }
    }

    /// Class list must be nonempty and duplicate-free.
    pub fn validate_schema(&self) -> Result<(), ManifestError> {
        if self.classes.is_empty() {
            return Err(ManifestError::Schema("class list is empty".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if c.trim().is_empty() {
                return Err(ManifestError::Schema("blank class name".into()));
            }
            if !seen.insert(c.to_ascii_lowercase()) {
                return Err(ManifestError::Schema(format!("duplicate class name `{c}`")));
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists under `base` and that label
    /// files only use known class indices.
    pub fn validate_files(&self, base: &Path) -> Result<(), ManifestError> {
        let missing: Vec<PathBuf> = self
            .items
            .iter()
            .flat_map(|it| [&it.image, &it.label])
            .map(|p| base.join(p))
            .filter(|p| !p.is_file())
            .collect();
        if !missing.is_empty() {
            return Err(ManifestError::MissingFiles(missing));
        }
        for it in &self.items {
            let path = base.join(&it.label);
            let text = std::fs::read_to_string(&path).map_err(|e| ManifestError::io(&path, e))?;
            parse_yolo_label(&text, Some(self.classes.len())).map_err(|error| ManifestError::Label {
                path: path.clone(),
                error,
            })?;
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.items.iter().filter(|i| i.split == split).count()
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            classes: self.classes.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for it in &self.items {
            out.push_str(&serde_json::to_string(it).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| ManifestError::Schema("manifest is empty".into()))?;
        let header: Header = serde_json::from_str(first).map_err(|e| ManifestError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != FORMAT {
            return Err(ManifestError::Schema(format!("unknown format `{}`", header.format)));
        }
        if header.version != VERSION {
            return Err(ManifestError::Schema(format!("unsupported version {}", header.version)));
        }
        let items = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| ManifestError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<ManifestItem>, _>>()?;
        let m = Self {
            classes: header.classes,
            items,
        };
        m.validate_schema()?;
        Ok(m)
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::io(path, e))?;
    DatasetManifest::from_jsonl(&text)
}

/// Writes through a temporary file in the same directory and renames it into
/// place. Callers must not run two writers on one path concurrently.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), ManifestError> {
    manifest.validate_schema()?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ManifestError::io(dir, e))?;
    tmp.write_all(manifest.to_jsonl().as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| ManifestError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| ManifestError::io(path, e.error))?;
    Ok(())
}
