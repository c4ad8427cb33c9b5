//! Dataset manifests: which file, which class, which split.
//!
//! Two layouts are accepted:
//!
//! * a CSV file with the header `path,label,split`, paths relative to the
//!   CSV's directory;
//! * a directory tree `root/{train,valid,test}/{real,fake}/*`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, valid or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Path as written in the manifest (relative to its root).
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    root: PathBuf,
    rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub real: usize,
    pub deepfake: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.real + self.deepfake
    }

    pub fn balanced(&self) -> bool {
        self.real == self.deepfake
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestSummary {
    pub splits: BTreeMap<Split, SplitCounts>,
    pub warnings: Vec<String>,
}

impl Manifest {
    /// Builds a manifest from rows, checking uniqueness and file existence.
    pub fn new(root: impl Into<PathBuf>, rows: Vec<ManifestRow>) -> Result<Self, DataError> {
        let root = root.into();
        let mut seen = HashSet::new();
        for (i, row) in rows.iter().enumerate() {
            if !seen.insert(row.path.clone()) {
                return Err(DataError::manifest(i + 1, format!("duplicate path {}", row.path.display())));
            }
            if !root.join(&row.path).is_file() {
                return Err(DataError::manifest(i + 1, format!("missing file {}", row.path.display())));
            }
        }
        Ok(Self { root, rows })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn summary(&self) -> ManifestSummary {
        let mut splits: BTreeMap<Split, SplitCounts> = Split::ALL.iter().map(|&s| (s, SplitCounts::default())).collect();
        for row in &self.rows {
            let counts = splits.get_mut(&row.split).expect("all splits present");
            match row.label {
                Label::Real => counts.real += 1,
                Label::Deepfake => counts.deepfake += 1,
            }
        }
        let mut warnings = Vec::new();
        for (split, counts) in &splits {
            if counts.total() == 0 {
                warnings.push(format!("split `{split}` is empty"));
            } else if !counts.balanced() {
                warnings.push(format!(
                    "split `{split}` is unbalanced: {} real / {} deepfake",
                    counts.real, counts.deepfake
                ));
            }
        }
        ManifestSummary { splits, warnings }
    }
}

/// Loads a manifest from a CSV file or a split/class directory tree.
pub fn load_manifest(source: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let source = source.as_ref();
    if source.is_dir() {
        from_tree(source)
    } else if source.is_file() {
        from_csv(source)
    } else {
        Err(DataError::Io(format!("{} does not exist", source.display())))
    }
}

fn from_csv(path: &Path) -> Result<Manifest, DataError> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| DataError::manifest(0, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
        return Err(DataError::manifest(0, format!("header must be `path,label,split`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::manifest(row, e.to_string()))?;
        let label = record[1].parse::<Label>().map_err(|e| DataError::manifest(row, e.to_string()))?;
        let split = record[2].parse::<Split>().map_err(|e| DataError::manifest(row, e))?;
        rows.push(ManifestRow {
            path: PathBuf::from(&record[0]),
            label,
            split,
        });
    }
    Manifest::new(root, rows)
}

fn from_tree(root: &Path) -> Result<Manifest, DataError> {
    let mut rows = Vec::new();
    for split in Split::ALL {
        for (dir, label) in [("real", Label::Real), ("fake", Label::Deepfake)] {
            let rel = Path::new(split.as_str()).join(dir);
            let full = root.join(&rel);
            if !full.is_dir() {
                continue;
            }
            let mut names: Vec<_> = fs::read_dir(&full)
                .map_err(|e| DataError::Io(format!("{}: {e}", full.display())))?
                .filter_map(|entry| entry.ok())
                .filter(|entry| entry.file_type().is_ok_and(|t| t.is_file()))
                .map(|entry| entry.file_name())
                .filter(|name| !name.to_string_lossy().starts_with('.'))
                .collect();
            names.sort();
            rows.extend(names.into_iter().map(|name| ManifestRow {
                path: rel.join(name),
                label,
                split,
            }));
        }
    }
    Manifest::new(root, rows)
}
