//! Per-label training sets: approved-cluster positives plus random negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_label, Corpus, Split};
use crate::error::{Error, Result};
use crate::table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub approved_cluster_ids: Vec<String>,
    pub approvals_used: usize,
    /// Absent when the label has no candidates.
    pub construction_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub label: String,
    pub positive_ids: Vec<String>,
    pub negative_ids: Vec<String>,
    pub provenance: Provenance,
}

/// Parent images of every region in the approved clusters, deduplicated and
/// ordered by id.
pub fn assemble_positives<S: AsRef<str>>(
    approved_regions: &[Vec<S>],
    owners: &BTreeMap<String, String>,
) -> Vec<String> {
    approved_regions
        .iter()
        .flatten()
        .filter_map(|r| owners.get(r.as_ref()).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeConfig {
    /// Leave images tagged with the label out of the negative pool.
    pub exclude_candidates: bool,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            exclude_candidates: true,
        }
    }
}

/// Development images eligible as negatives, ordered by id.
pub fn negative_pool(corpus: &Corpus, positives: &[String], label: &str, config: &NegativeConfig) -> Vec<String> {
    let label = normalize_label(label);
    let pos: BTreeSet<&str> = positives.iter().map(String::as_str).collect();
    let mut pool: Vec<String> = corpus
        .split(Split::Development)
        .filter(|r| !pos.contains(r.image_id.as_str()))
        .filter(|r| !(config.exclude_candidates && r.has_tag(&label)))
        .map(|r| r.image_id.clone())
        .collect();
    pool.sort();
    pool
}

/// Uniform sample without replacement, capped at the pool size. The result is
/// ordered by id.
pub fn sample_ids(pool: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = pool.choose_multiple(&mut rng, n.min(pool.len())).cloned().collect();
    out.sort();
    out
}

pub fn sample_negatives(
    corpus: &Corpus,
    positives: &[String],
    label: &str,
    n: usize,
    seed: u64,
    config: &NegativeConfig,
) -> Vec<String> {
    sample_ids(&negative_pool(corpus, positives, label, config), n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionMetrics {
    pub construction_rate: Option<f64>,
    pub label_precision: Option<f64>,
}

pub fn construction_metrics(set: &TrainingSet, candidates: &[String], corpus: &Corpus) -> ConstructionMetrics {
    ConstructionMetrics {
        construction_rate: (!candidates.is_empty()).then(|| set.positive_ids.len() as f64 / candidates.len() as f64),
        label_precision: corpus.label_precision(&set.positive_ids, &set.label),
    }
}

pub fn write_trainsets(path: &Path, sets: &[TrainingSet]) -> Result<()> {
    let mut out = String::new();
    for s in sets {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    table::write_text(path, &out)
}

pub fn read_trainsets(path: &Path) -> Result<Vec<TrainingSet>> {
    table::read_rows(path)?
        .into_iter()
        .map(|(line, row)| serde_json::from_str(&row).map_err(|e| Error::parse(path, line, e.to_string())))
        .collect()
}
