//! File-based pipeline stages. Each stage reads the artifacts of earlier
//! stages from a work directory and writes its own; nothing is shared in
//! memory, so any stage can be re-run on its own.
//!
//! ```text
//! manifest.tsv, images/        synth | ingest
//! regions.tsv                  segment
//! region_features.bin(.tsv)    features
//! global_features.bin(.tsv)    features
//! sessions/<label>/            construct
//! trainsets.ndjson             assemble
//! scores.tsv                   annotate
//! evaluation.tsv               evaluate
//! report.tsv                   report
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::annotate::{self, Arm, ArmRun, Protocol};
use crate::approval::oracle::oracle_approve;
use crate::approval::{ItemKind, Session, SessionDir, SessionPlan};
use crate::cluster::{refine_bins, write_cluster_table};
use crate::collage::load_rgb;
use crate::config::Config;
use crate::corpus::{normalize_label, Corpus};
use crate::error::{Error, Result};
use crate::features::{global_features, region_features, GLOBAL_DIM, REGION_DIM};
use crate::lsh::{bucketize, select_bins, write_bin_table, Hasher};
use crate::segment::{read_region_table, segment, write_region_table, RegionRow};
use crate::store::FeatureStore;
use crate::synth::generate_synthetic;
use crate::table;
use crate::trainset::{
    assemble_positives, construction_metrics, read_trainsets, sample_negatives, write_trainsets, Provenance,
    TrainingSet,
};

/// Paths of every artifact inside one work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.tsv")
    }
    pub fn regions(&self) -> PathBuf {
        self.dir.join("regions.tsv")
    }
    pub fn region_features(&self) -> PathBuf {
        self.dir.join("region_features.bin")
    }
    pub fn global_features(&self) -> PathBuf {
        self.dir.join("global_features.bin")
    }
    pub fn sessions(&self) -> PathBuf {
        self.dir.join("sessions")
    }
    pub fn session(&self, label: &str) -> SessionDir {
        SessionDir::new(self.sessions().join(label))
    }
    pub fn trainsets(&self) -> PathBuf {
        self.dir.join("trainsets.ndjson")
    }
    pub fn scores(&self) -> PathBuf {
        self.dir.join("scores.tsv")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.dir.join("evaluation.tsv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.tsv")
    }
}

fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, producer })
    }
}

fn load_corpus(ws: &Workspace) -> Result<Corpus> {
    Corpus::load_manifest(require(ws.manifest(), "synth or ingest")?)
}

/// Copies an external manifest into the work directory, with image paths
/// made absolute so the copy resolves from its new location.
pub fn ingest(ws: &Workspace, manifest: &Path) -> Result<Corpus> {
    let src = Corpus::load_manifest(manifest)?;
    let records = src
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let p = src.image_path(&r);
            r.path = std::path::absolute(&p).map_err(|e| Error::io(&p, e))?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::new(records, &ws.dir)?;
    corpus.write_manifest(ws.manifest())?;
    Ok(corpus)
}

pub fn synth(ws: &Workspace, cfg: &Config) -> Result<Corpus> {
    generate_synthetic(&cfg.synth, cfg.seed, &ws.dir)
}

/// Segments every image and writes the region table.
pub fn segment_corpus(ws: &Workspace, cfg: &Config) -> Result<usize> {
    let corpus = load_corpus(ws)?;
    let per_image: Vec<Vec<RegionRow>> = corpus
        .records()
        .par_iter()
        .map(|r| {
            let img = load_rgb(&corpus.image_path(r))?;
            Ok(segment(&r.image_id, &img, &cfg.segmenter)?
                .iter()
                .map(RegionRow::from)
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<RegionRow> = per_image.into_iter().flatten().collect();
    write_region_table(&ws.regions(), &rows)?;
    log::info!("segmented {} images into {} regions", corpus.len(), rows.len());
    Ok(rows.len())
}

/// Region and global features for every image. Masks are recomputed by
/// re-running the segmentation, which must agree with the region table.
pub fn extract_features(ws: &Workspace, cfg: &Config) -> Result<(FeatureStore, FeatureStore)> {
    let corpus = load_corpus(ws)?;
    let table_path = require(ws.regions(), "segment")?;
    let expected: BTreeSet<String> = read_region_table(&table_path)?
        .into_iter()
        .map(|r| r.region_id)
        .collect();

    type PerImage = (String, Vec<(String, Vec<f64>)>, Vec<f64>);
    let per_image: Vec<PerImage> = corpus
        .records()
        .par_iter()
        .map(|r| {
            let img = load_rgb(&corpus.image_path(r))?;
            let regions = segment(&r.image_id, &img, &cfg.segmenter)?;
            let feats = regions
                .iter()
                .map(|reg| {
                    if !expected.contains(&reg.region_id) {
                        return Err(Error::Config(format!(
                            "region {} not in {}; re-run segment with the current config",
                            reg.region_id,
                            table_path.display()
                        )));
                    }
                    Ok((reg.region_id.clone(), region_features(&img, reg)?.vector))
                })
                .collect::<Result<_>>()?;
            let global = global_features(&r.image_id, &img, &cfg.features)?.vector;
            Ok((r.image_id.clone(), feats, global))
        })
        .collect::<Result<_>>()?;

    let mut regions = FeatureStore::new(REGION_DIM);
    let mut globals = FeatureStore::new(GLOBAL_DIM);
    for (image_id, feats, global) in &per_image {
        for (rid, v) in feats {
            regions.push(rid, image_id, v)?;
        }
        globals.push(image_id, image_id, global)?;
    }
    regions.write(&ws.region_features())?;
    globals.write(&ws.global_features())?;
    Ok((regions, globals))
}

fn load_features(ws: &Workspace) -> Result<(FeatureStore, FeatureStore)> {
    let r = FeatureStore::read(&require(ws.region_features(), "features")?)?;
    let g = FeatureStore::read(&require(ws.global_features(), "features")?)?;
    Ok((r, g))
}

/// What `construct` produced for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructSummary {
    pub label: String,
    pub candidates: usize,
    pub bins: usize,
    pub clusters: usize,
    /// Decisions made by the oracle, when it ran.
    pub decisions: Option<usize>,
}

struct Inputs {
    corpus: Corpus,
    regions: FeatureStore,
    globals: FeatureStore,
}

fn load_inputs(ws: &Workspace) -> Result<Inputs> {
    let corpus = load_corpus(ws)?;
    let (regions, globals) = load_features(ws)?;
    Ok(Inputs {
        corpus,
        regions,
        globals,
    })
}

fn construct_with(
    ws: &Workspace,
    cfg: &Config,
    inputs: &Inputs,
    label: &str,
    oracle: bool,
) -> Result<ConstructSummary> {
    let label = normalize_label(label);
    let candidates = inputs.corpus.candidate_images(&label);
    let cand: BTreeSet<&str> = candidates.iter().map(String::as_str).collect();
    let points: Vec<(&str, Vec<f64>)> = inputs
        .regions
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| inputs.regions.image_of(id).is_some_and(|img| cand.contains(img)))
        .map(|(i, id)| (id.as_str(), inputs.regions.row(i)))
        .collect();
    let owners: BTreeMap<String, String> = points
        .iter()
        .filter_map(|(id, _)| Some((id.to_string(), inputs.regions.image_of(id)?.to_string())))
        .collect();

    let hasher = Hasher::new(cfg.lsh)?;
    let bins = select_bins(&bucketize(&hasher, &points)?, candidates.len());
    let clusters = refine_bins(&bins, &inputs.regions, &inputs.globals, &cfg.cluster, cfg.seed)?;

    let sd = ws.session(&label);
    if sd.dir.exists() {
        std::fs::remove_dir_all(&sd.dir).map_err(|e| Error::io(&sd.dir, e))?;
    }
    write_bin_table(&sd.dir.join("bins.tsv"), &bins)?;
    write_cluster_table(&sd.dir.join("clusters.tsv"), &clusters)?;
    let plan = SessionPlan::new(&label, &bins, &clusters, &owners)?;
    plan.render_collages(&sd.dir, &inputs.corpus, &cfg.collage)?;
    sd.create(&plan)?;

    let decisions = if oracle {
        let mut session = Session::new(plan);
        oracle_approve(&mut session, &inputs.corpus, &cfg.oracle)?;
        for rec in session.log() {
            sd.append(rec)?;
        }
        Some(session.decisions())
    } else {
        None
    };
    log::info!(
        "{label}: {} candidates, {} bins, {} clusters",
        candidates.len(),
        bins.len(),
        clusters.len()
    );
    Ok(ConstructSummary {
        label,
        candidates: candidates.len(),
        bins: bins.len(),
        clusters: clusters.len(),
        decisions,
    })
}

/// Builds the review session for one label; with `oracle` it is also decided
/// headlessly from ground truth.
pub fn construct(ws: &Workspace, cfg: &Config, label: &str, oracle: bool) -> Result<ConstructSummary> {
    construct_with(ws, cfg, &load_inputs(ws)?, label, oracle)
}

/// [`construct`] for every label of the vocabulary that has candidates.
pub fn construct_all(ws: &Workspace, cfg: &Config, oracle: bool) -> Result<Vec<ConstructSummary>> {
    let inputs = load_inputs(ws)?;
    let labels: Vec<String> = inputs
        .corpus
        .label_vocabulary()
        .iter()
        .filter(|l| !inputs.corpus.candidate_images(l).is_empty())
        .cloned()
        .collect();
    labels
        .iter()
        .map(|l| construct_with(ws, cfg, &inputs, l, oracle))
        .collect()
}

fn load_sessions(ws: &Workspace) -> Result<Vec<Session>> {
    let root = require(ws.sessions(), "construct")?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(|e| Error::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SessionDir::PLAN).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifact {
            path: root.join("<label>").join(SessionDir::PLAN),
            producer: "construct",
        });
    }
    dirs.into_iter().map(|d| SessionDir::new(d).load()).collect()
}

/// Training sets from every session's approved clusters.
pub fn assemble(ws: &Workspace, cfg: &Config) -> Result<Vec<TrainingSet>> {
    let corpus = load_corpus(ws)?;
    let sessions = load_sessions(ws)?;
    let sets: Vec<TrainingSet> = sessions
        .iter()
        .map(|s| {
            if !s.is_complete() {
                log::warn!("session {} has {} pending items", s.session_id(), s.pending_count());
            }
            let approved = s.approved_clusters();
            let regions: Vec<Vec<String>> = approved.iter().map(|(_, r)| r.clone()).collect();
            let positives = assemble_positives(&regions, &s.plan().owners);
            let negatives = sample_negatives(&corpus, &positives, s.label(), positives.len(), cfg.seed, &cfg.trainset);
            let candidates = corpus.candidate_images(s.label());
            let mut set = TrainingSet {
                label: s.label().to_string(),
                positive_ids: positives,
                negative_ids: negatives,
                provenance: Provenance {
                    approved_cluster_ids: approved.into_iter().map(|(id, _)| id).collect(),
                    approvals_used: s.decisions(),
                    construction_rate: None,
                },
            };
            set.provenance.construction_rate = construction_metrics(&set, &candidates, &corpus).construction_rate;
            set
        })
        .collect();
    write_trainsets(&ws.trainsets(), &sets)?;
    Ok(sets)
}

/// Scores the test split with both arms, for every seed.
pub fn annotate_runs(ws: &Workspace, cfg: &Config) -> Result<Vec<ArmRun>> {
    let corpus = load_corpus(ws)?;
    let sets = read_trainsets(&require(ws.trainsets(), "assemble")?)?;
    let globals = FeatureStore::read(&require(ws.global_features(), "features")?)?;
    let protocol = Protocol {
        corpus: &corpus,
        globals: &globals,
        config: &cfg.annotator,
        negatives: &cfg.trainset,
    };
    let mut runs = Vec::new();
    for set in &sets {
        runs.extend(protocol.constructed_runs(&set.label, &set.positive_ids)?);
        let candidates = corpus.candidate_images(&set.label);
        runs.extend(protocol.baseline_runs(&set.label, &candidates, set.positive_ids.len())?);
    }
    annotate::write_score_runs(&ws.scores(), &runs)?;
    Ok(runs)
}

/// Seed-averaged AP per label and arm. `None` marks labels without relevant
/// test images.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_label: BTreeMap<String, (Option<f64>, Option<f64>)>,
}

impl Evaluation {
    /// Mean over labels with a defined AP, per arm.
    pub fn map(&self) -> (Option<f64>, Option<f64>) {
        (
            annotate::mean(self.per_label.values().filter_map(|v| v.0)),
            annotate::mean(self.per_label.values().filter_map(|v| v.1)),
        )
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn parse_opt(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        table::parse_num(path, line, s, "value").map(Some)
    }
}

pub fn evaluate(ws: &Workspace) -> Result<Evaluation> {
    let corpus = load_corpus(ws)?;
    let runs = annotate::read_score_runs(&require(ws.scores(), "annotate")?)?;
    let mut grouped: BTreeMap<(String, Arm), Vec<ArmRun>> = BTreeMap::new();
    for r in runs {
        grouped.entry((r.label.clone(), r.arm)).or_default().push(r);
    }
    let mut per_label: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for ((label, arm), runs) in &grouped {
        let ap = annotate::averaged_ap(runs, &corpus);
        if ap.is_none() && *arm == Arm::Constructed {
            log::warn!("label {label} has no relevant test images; excluded from MAP");
        }
        let e = per_label.entry(label.clone()).or_default();
        match arm {
            Arm::Constructed => e.0 = ap,
            Arm::Baseline => e.1 = ap,
        }
    }
    let eval = Evaluation { per_label };
    let mut out = String::from("label\tap_constructed\tap_baseline\n");
    for (label, (c, b)) in &eval.per_label {
        let _ = writeln!(out, "{label}\t{}\t{}", fmt_opt(*c), fmt_opt(*b));
    }
    table::write_text(&ws.evaluation(), &out)?;
    Ok(eval)
}

fn read_evaluation(path: &Path) -> Result<Evaluation> {
    let mut per_label = BTreeMap::new();
    for (line, row) in table::read_rows(path)?.into_iter().skip(1) {
        let f = table::fields(path, line, &row, 3)?;
        per_label.insert(
            f[0].to_string(),
            (parse_opt(path, line, f[1])?, parse_opt(path, line, f[2])?),
        );
    }
    Ok(Evaluation { per_label })
}

/// One row of the final report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub ap_constructed: Option<f64>,
    pub ap_baseline: Option<f64>,
    pub n_pos: usize,
    pub approvals: usize,
    pub cluster_decisions: usize,
    pub clusters: usize,
    pub construction_rate: Option<f64>,
    pub precision_before: Option<f64>,
    pub precision_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub map_constructed: Option<f64>,
    pub map_baseline: Option<f64>,
}

impl Report {
    pub fn render(&self, cfg: &Config) -> String {
        let mut out = String::new();
        for line in cfg.to_toml().lines().filter(|l| !l.is_empty()) {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(
            "label\tap_constructed\tap_baseline\tn_pos\tapprovals\tconstruction_rate\tprecision_before\tprecision_after\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.label,
                fmt_opt(r.ap_constructed),
                fmt_opt(r.ap_baseline),
                r.n_pos,
                r.approvals,
                fmt_opt(r.construction_rate),
                fmt_opt(r.precision_before),
                fmt_opt(r.precision_after)
            );
        }
        let _ = writeln!(
            out,
            "MAP\t{}\t{}",
            fmt_opt(self.map_constructed),
            fmt_opt(self.map_baseline)
        );
        out
    }
}

/// Joins evaluation, training sets and sessions into `report.tsv`.
pub fn report(ws: &Workspace, cfg: &Config) -> Result<Report> {
    let corpus = load_corpus(ws)?;
    let eval = read_evaluation(&require(ws.evaluation(), "evaluate")?)?;
    let sets = read_trainsets(&require(ws.trainsets(), "assemble")?)?;
    let sessions: BTreeMap<String, Session> = load_sessions(ws)?
        .into_iter()
        .map(|s| (s.label().to_string(), s))
        .collect();
    let rows = sets
        .iter()
        .map(|set| {
            let candidates = corpus.candidate_images(&set.label);
            let (ap_c, ap_b) = eval.per_label.get(&set.label).copied().unwrap_or((None, None));
            let session = sessions.get(&set.label);
            ReportRow {
                label: set.label.clone(),
                ap_constructed: ap_c,
                ap_baseline: ap_b,
                n_pos: set.positive_ids.len(),
                approvals: set.provenance.approvals_used,
                cluster_decisions: session.map_or(0, |s| s.decisions_of(ItemKind::ClusterRelevance)),
                clusters: session.map_or(0, |s| s.plan().clusters.len()),
                construction_rate: set.provenance.construction_rate,
                precision_before: corpus.label_precision(&candidates, &set.label),
                precision_after: corpus.label_precision(&set.positive_ids, &set.label),
            }
        })
        .collect();
    let (map_constructed, map_baseline) = eval.map();
    let report = Report {
        rows,
        map_constructed,
        map_baseline,
    };
    table::write_text(&ws.report(), &report.render(cfg))?;
    Ok(report)
}

/// Every stage from a synthetic corpus to the report, with oracle approval.
pub fn run_synthetic(ws: &Workspace, cfg: &Config) -> Result<Report> {
    synth(ws, cfg)?;
    segment_corpus(ws, cfg)?;
    extract_features(ws, cfg)?;
    construct_all(ws, cfg, true)?;
    assemble(ws, cfg)?;
    annotate_runs(ws, cfg)?;
    evaluate(ws)?;
    report(ws, cfg)
}
