//! k-NN annotation of test images and ranked-retrieval evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ap::sq_dist;
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::store::FeatureStore;
use crate::table;
use crate::trainset::{sample_ids, sample_negatives, NegativeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    /// Neighbors consulted per test image.
    pub k: usize,
    /// Seeds of the repeated runs that are averaged.
    pub seeds: Vec<u64>,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            k: 25,
            seeds: vec![1, 2, 3],
        }
    }
}

/// Training images with their global features and polarity.
#[derive(Debug, Clone, Default)]
pub struct KnnIndex {
    entries: Vec<(String, Vec<f64>, bool)>,
}

impl KnnIndex {
    pub fn build(positives: &[String], negatives: &[String], globals: &FeatureStore) -> Result<Self> {
        let mut entries = Vec::with_capacity(positives.len() + negatives.len());
        for (ids, positive) in [(positives, true), (negatives, false)] {
            for id in ids {
                let v = globals.get(id).ok_or_else(|| Error::MissingFeature {
                    kind: "global",
                    id: id.clone(),
                })?;
                entries.push((id.clone(), v, positive));
            }
        }
        Ok(KnnIndex { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `k` nearest training images (ties by image id).
    pub fn neighbors(&self, query: &[f64], k: usize) -> Vec<(&str, f64, bool)> {
        let mut d: Vec<(&str, f64, bool)> = self
            .entries
            .iter()
            .map(|(id, v, p)| (id.as_str(), sq_dist(query, v), *p))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        d.truncate(k);
        d
    }

    /// Fraction of positives among the nearest `min(k, n)` training images.
    pub fn score(&self, query: &[f64], k: usize) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let nn = self.neighbors(query, k);
        Ok(nn.iter().filter(|n| n.2).count() as f64 / nn.len() as f64)
    }
}

pub fn knn_score(query: &[f64], index: &KnnIndex, config: &AnnotatorConfig) -> Result<f64> {
    index.score(query, config.k)
}

/// Orders by score descending, then image id ascending.
pub fn rank(scores: &[(String, f64)]) -> Vec<&str> {
    let mut v: Vec<&(String, f64)> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id.as_str()).collect()
}

/// Non-interpolated average precision: the mean, over the ranks of relevant
/// items, of the precision at that rank. Relevant ids that never appear in
/// `scores` are ignored. 0 when nothing relevant is ranked.
pub fn average_precision(scores: &[(String, f64)], relevant: &BTreeSet<String>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in rank(scores).into_iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Scores per label over the test images.
pub type ScoreTable = BTreeMap<String, Vec<(String, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunEvaluation {
    /// `None` for labels without any relevant test image.
    pub per_label: BTreeMap<String, Option<f64>>,
    pub map: Option<f64>,
}

pub fn test_relevant(corpus: &Corpus, label: &str) -> BTreeSet<String> {
    corpus
        .split(Split::Testing)
        .filter(|r| r.truly_has(label).unwrap_or(false))
        .map(|r| r.image_id.clone())
        .collect()
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, s) = values.into_iter().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

pub fn evaluate_run(table: &ScoreTable, corpus: &Corpus) -> RunEvaluation {
    let per_label: BTreeMap<String, Option<f64>> = table
        .iter()
        .map(|(label, scores)| {
            let relevant = test_relevant(corpus, label);
            if relevant.is_empty() {
                log::warn!("label {label} has no relevant test images; excluded from MAP");
                (label.clone(), None)
            } else {
                (label.clone(), Some(average_precision(scores, &relevant)))
            }
        })
        .collect();
    let map = mean(per_label.values().flatten().copied());
    RunEvaluation { per_label, map }
}

/// Test-split image ids, ordered.
pub fn test_ids(corpus: &Corpus) -> Vec<String> {
    let mut v: Vec<String> = corpus.split(Split::Testing).map(|r| r.image_id.clone()).collect();
    v.sort();
    v
}

/// Scores every test image. An empty training set scores everything 0.
pub fn score_tests(index: &KnnIndex, tests: &[String], globals: &FeatureStore, k: usize) -> Result<Vec<(String, f64)>> {
    tests
        .par_iter()
        .map(|id| {
            let q = globals.get(id).ok_or_else(|| Error::MissingFeature {
                kind: "global",
                id: id.clone(),
            })?;
            let s = if index.is_empty() { 0.0 } else { index.score(&q, k)? };
            Ok((id.clone(), s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Constructed,
    Baseline,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Constructed => "constructed",
            Arm::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constructed" => Ok(Arm::Constructed),
            "baseline" => Ok(Arm::Baseline),
            other => Err(format!("unknown arm `{other}`")),
        }
    }
}

/// Positive-sampling seed for the baseline arm, kept apart from the
/// negative-sampling seed.
fn positive_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// One scored run of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub label: String,
    pub scores: Vec<(String, f64)>,
}

pub struct Protocol<'a> {
    pub corpus: &'a Corpus,
    pub globals: &'a FeatureStore,
    pub config: &'a AnnotatorConfig,
    pub negatives: &'a NegativeConfig,
}

impl Protocol<'_> {
    fn run(&self, label: &str, positives: &[String], seed: u64, tests: &[String]) -> Result<Vec<(String, f64)>> {
        let negatives = sample_negatives(self.corpus, positives, label, positives.len(), seed, self.negatives);
        let index = KnnIndex::build(positives, &negatives, self.globals)?;
        score_tests(&index, tests, self.globals, self.config.k)
    }

    /// Constructed positives with freshly sampled negatives, one run per seed.
    pub fn constructed_runs(&self, label: &str, positives: &[String]) -> Result<Vec<ArmRun>> {
        let tests = test_ids(self.corpus);
        self.config
            .seeds
            .iter()
            .map(|&seed| {
                Ok(ArmRun {
                    arm: Arm::Constructed,
                    seed,
                    label: label.to_string(),
                    scores: self.run(label, positives, seed, &tests)?,
                })
            })
            .collect()
    }

    /// `n_pos` positives sampled from the candidates, one run per seed.
    pub fn baseline_runs(&self, label: &str, candidates: &[String], n_pos: usize) -> Result<Vec<ArmRun>> {
        if n_pos > candidates.len() {
            log::warn!(
                "baseline for {label}: {n_pos} positives requested but only {} candidates",
                candidates.len()
            );
        }
        let tests = test_ids(self.corpus);
        self.config
            .seeds
            .iter()
            .map(|&seed| {
                let positives = sample_ids(candidates, n_pos, positive_seed(seed));
                Ok(ArmRun {
                    arm: Arm::Baseline,
                    seed,
                    label: label.to_string(),
                    scores: self.run(label, &positives, seed, &tests)?,
                })
            })
            .collect()
    }
}

/// Mean AP over the runs of one arm for one label.
pub fn averaged_ap(runs: &[ArmRun], corpus: &Corpus) -> Option<f64> {
    let label = &runs.first()?.label;
    let relevant = test_relevant(corpus, label);
    if relevant.is_empty() {
        return None;
    }
    mean(runs.iter().map(|r| average_precision(&r.scores, &relevant)))
}

/// Baseline arm averaged AP for one label.
pub fn run_baseline(protocol: &Protocol<'_>, label: &str, candidates: &[String], n_pos: usize) -> Result<Option<f64>> {
    let runs = protocol.baseline_runs(label, candidates, n_pos)?;
    Ok(averaged_ap(&runs, protocol.corpus))
}

pub fn write_score_runs(path: &Path, runs: &[ArmRun]) -> Result<()> {
    let mut out = String::new();
    for r in runs {
        for (id, s) in &r.scores {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.arm.as_str(),
                r.seed,
                r.label,
                id,
                table::fmt_f64(*s)
            ));
        }
    }
    table::write_text(path, &out)
}

pub fn read_score_runs(path: &Path) -> Result<Vec<ArmRun>> {
    let mut runs: BTreeMap<(Arm, String, u64), Vec<(String, f64)>> = BTreeMap::new();
    let mut order: Vec<(Arm, String, u64)> = Vec::new();
    for (line, row) in table::read_rows(path)? {
        let f = table::fields(path, line, &row, 5)?;
        let arm: Arm = f[0].parse().map_err(|e: String| Error::parse(path, line, e))?;
        let seed: u64 = table::parse_num(path, line, f[1], "seed")?;
        let key = (arm, f[2].to_string(), seed);
        let score: f64 = table::parse_num(path, line, f[4], "score")?;
        runs.entry(key.clone())
            .or_insert_with(|| {
                order.push(key.clone());
                Vec::new()
            })
            .push((f[3].to_string(), score));
    }
    Ok(order
        .into_iter()
        .map(|k| {
            let scores = runs.remove(&k).unwrap_or_default();
            ArmRun {
                arm: k.0,
                label: k.1,
                seed: k.2,
                scores,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(i, s)| (i.to_string(), *s)).collect()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ap_examples() {
        let s = scores(&[("a", 0.9), ("b", 0.5), ("c", 0.1)]);
        assert_eq!(average_precision(&s, &set(&["a", "b"])), 1.0);
        assert!((average_precision(&s, &set(&["a", "c"])) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&s, &set(&[])), 0.0);
    }

    #[test]
    fn ap_ties_broken_by_id() {
        let s = scores(&[("b", 0.5), ("a", 0.5)]);
        assert_eq!(rank(&s), ["a", "b"]);
        assert_eq!(average_precision(&s, &set(&["b"])), 0.5);
    }

    fn store(rows: &[(&str, Vec<f64>)]) -> FeatureStore {
        let mut s = FeatureStore::new(rows[0].1.len());
        for (id, v) in rows {
            s.push(id, id, v).unwrap();
        }
        s
    }

    #[test]
    fn knn_extremes_and_errors() {
        let g = store(&[
            ("p1", vec![0.0]),
            ("p2", vec![0.1]),
            ("n1", vec![5.0]),
            ("n2", vec![5.1]),
        ]);
        let pos = KnnIndex::build(&["p1".into(), "p2".into()], &[], &g).unwrap();
        assert_eq!(pos.score(&[3.0], 2).unwrap(), 1.0);
        let neg = KnnIndex::build(&[], &["n1".into(), "n2".into()], &g).unwrap();
        assert_eq!(neg.score(&[0.0], 2).unwrap(), 0.0);
        let empty = KnnIndex::build(&[], &[], &g).unwrap();
        assert!(matches!(empty.score(&[0.0], 3), Err(Error::EmptyTrainingSet)));
        assert!(KnnIndex::build(&["zz".into()], &[], &g).is_err());
    }

    #[test]
    fn map_excludes_labels_without_relevant_images() {
        use crate::corpus::ImageRecord;
        let rec = |id: &str, truth: &str| ImageRecord {
            image_id: id.into(),
            path: "x.png".into(),
            tags: BTreeSet::new(),
            split: Split::Testing,
            truth_labels: Some(set(&[truth])),
        };
        let c = Corpus::new(vec![rec("t1", "a"), rec("t2", "b"), rec("t3", "b")], "").unwrap();
        let mut table = ScoreTable::new();
        table.insert("a".into(), scores(&[("t1", 0.1), ("t2", 0.9), ("t3", 0.5)]));
        table.insert("b".into(), scores(&[("t1", 0.1), ("t2", 0.9), ("t3", 0.5)]));
        table.insert("z".into(), scores(&[("t1", 0.1)]));
        let ev = evaluate_run(&table, &c);
        assert!((ev.per_label["a"].unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ev.per_label["b"], Some(1.0));
        assert_eq!(ev.per_label["z"], None);
        assert!((ev.map.unwrap() - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mean_helper() {
        assert_eq!(mean([0.2, 0.4]).map(|m| (m * 10.0).round()), Some(3.0));
        assert_eq!(mean([0.7]), Some(0.7));
        assert_eq!(mean(std::iter::empty()), None);
    }

    #[test]
    fn score_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.tsv");
        let runs = vec![
            ArmRun {
                arm: Arm::Constructed,
                seed: 1,
                label: "x".into(),
                scores: scores(&[("a", 0.2), ("b", 1.0)]),
            },
            ArmRun {
                arm: Arm::Baseline,
                seed: 1,
                label: "x".into(),
                scores: scores(&[("a", 0.04)]),
            },
        ];
        write_score_runs(&p, &runs).unwrap();
        assert_eq!(read_score_runs(&p).unwrap(), runs);
    }
}
