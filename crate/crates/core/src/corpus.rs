//! Image corpora: manifest loading and writing, splits, and candidate lookup.
//!
//! A manifest is a UTF-8 text file with one image per line and five
//! tab-separated fields:
//!
//! ```text
//! image_id  relative_path  split  tag1,tag2,...  truth1,truth2,...
//! ```
//!
//! The fifth field may be empty. Tags and truth labels are trimmed and
//! lowercased on load. Image files are not opened here.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Development,
    Testing,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Development => "development",
            Split::Testing => "testing",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "development" | "dev" => Ok(Split::Development),
            "testing" | "test" => Ok(Split::Testing),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    /// Raster location relative to the corpus root.
    pub path: PathBuf,
    pub tags: BTreeSet<String>,
    pub split: Split,
    /// Ground truth. Only the oracle approver and the evaluator read this.
    pub truth_labels: Option<BTreeSet<String>>,
}

impl ImageRecord {
    pub fn has_tag(&self, label: &str) -> bool {
        self.tags.contains(label)
    }

    pub fn truly_has(&self, label: &str) -> Option<bool> {
        self.truth_labels.as_ref().map(|t| t.contains(label))
    }
}

pub fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

fn label_set(field: &str) -> BTreeSet<String> {
    table::split_list(field).map(normalize_label).collect()
}

/// An immutable collection of image records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<ImageRecord>,
    label_vocabulary: Vec<String>,
    root: PathBuf,
    index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.label_vocabulary == other.label_vocabulary
    }
}

impl Corpus {
    /// Builds a corpus from records. `root` is the directory relative image
    /// paths are resolved against.
    pub fn new(records: Vec<ImageRecord>, root: impl Into<PathBuf>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.image_id.clone(), i).is_some() {
                return Err(Error::DuplicateImage(r.image_id.clone()));
            }
        }
        let vocab: BTreeSet<&String> = records
            .iter()
            .flat_map(|r| r.tags.iter().chain(r.truth_labels.iter().flatten()))
            .collect();
        Ok(Corpus {
            label_vocabulary: vocab.into_iter().cloned().collect(),
            records,
            root: root.into(),
            index,
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn label_vocabulary(&self) -> &[String] {
        &self.label_vocabulary
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    pub fn require(&self, image_id: &str) -> Result<&ImageRecord> {
        self.get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    pub fn image_path(&self, record: &ImageRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Development images whose tag list contains `label`, ordered by id.
    pub fn candidate_images(&self, label: &str) -> Vec<String> {
        let label = normalize_label(label);
        let mut ids: Vec<String> = self
            .split(Split::Development)
            .filter(|r| r.has_tag(&label))
            .map(|r| r.image_id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut records = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (line, row) in table::read_rows(path)? {
            let f = table::fields(path, line, &row, 5)?;
            let image_id = f[0].trim().to_string();
            if image_id.is_empty() {
                return Err(Error::parse(path, line, "empty image_id"));
            }
            if f[1].trim().is_empty() {
                return Err(Error::parse(path, line, "empty image path"));
            }
            let split = f[2].parse().map_err(|e: String| Error::parse(path, line, e))?;
            if let Some(first) = seen.insert(image_id.clone(), line) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate image id `{image_id}` (first seen on line {first})"),
                ));
            }
            let truth = f[4];
            records.push(ImageRecord {
                image_id,
                path: PathBuf::from(f[1].trim()),
                tags: label_set(f[3]),
                split,
                truth_labels: (!truth.trim().is_empty()).then(|| label_set(truth)),
            });
        }
        Corpus::new(records, root)
    }

    pub fn to_manifest_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.image_id,
                r.path.to_string_lossy(),
                r.split,
                join(&r.tags),
                r.truth_labels.as_ref().map(join).unwrap_or_default()
            ));
        }
        out
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        table::write_text(path.as_ref(), &self.to_manifest_string())
    }

    /// Fraction of images (optionally restricted to one split) whose tags
    /// equal their truth labels. Images without truth are skipped.
    pub fn tag_precision(&self, split: Option<Split>) -> Option<f64> {
        let mut n = 0usize;
        let mut hits = 0usize;
        for r in &self.records {
            if split.is_some_and(|s| s != r.split) {
                continue;
            }
            if let Some(t) = &r.truth_labels {
                n += 1;
                hits += usize::from(*t == r.tags);
            }
        }
        (n > 0).then(|| hits as f64 / n as f64)
    }

    /// Fraction of the given images whose truth labels contain `label`.
    pub fn label_precision(&self, ids: &[String], label: &str) -> Option<f64> {
        if ids.is_empty() {
            return None;
        }
        let hits = ids
            .iter()
            .filter(|id| self.get(id).and_then(|r| r.truly_has(label)).unwrap_or(false))
            .count();
        Some(hits as f64 / ids.len() as f64)
    }
}
