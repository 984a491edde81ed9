//! Two-phase review of bins and clusters.
//!
//! Phase one asks, for each selected bin, whether it is background. Once every
//! bin is decided, phase two opens one relevance item per cluster that still
//! has regions after background bins are removed. Every decision is appended
//! to a log; replaying the log over the session plan reproduces the statuses.

pub mod http;
pub mod log;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use self::log::LogRecord;
pub use oracle::{oracle_approve, OracleConfig};

use crate::cluster::Cluster;
use crate::collage::{self, CollageConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lsh::Bin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    BinBackground,
    ClusterRelevance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approved,
    Rejected,
}

impl From<Decision> for Status {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Approved => Status::Approved,
            Decision::Rejected => Status::Rejected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decider {
    Human,
    Oracle,
}

impl fmt::Display for Decider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decider::Human => "human",
            Decider::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub label: String,
    /// Collage PNG, relative to the session directory.
    pub collage_ref: PathBuf,
    /// Bin key or cluster id.
    pub subject_ref: String,
    pub status: Status,
    pub decided_at: Option<DateTime<Utc>>,
    pub decider: Option<Decider>,
}

/// What one review item is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub item_id: String,
    /// Bin key or cluster id.
    pub subject_ref: String,
    /// Bin key the subject came from.
    pub bin_key: String,
    pub region_ids: Vec<String>,
    /// Distinct parent images, sorted.
    pub image_ids: Vec<String>,
    pub collage_ref: PathBuf,
}

/// The immutable definition of a session: what gets reviewed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub label: String,
    pub bins: Vec<Subject>,
    pub clusters: Vec<Subject>,
    /// Region id to parent image id for every referenced region.
    pub owners: BTreeMap<String, String>,
}

pub fn session_id(label: &str) -> String {
    format!("s-{label}")
}

impl SessionPlan {
    pub fn new(label: &str, bins: &[Bin], clusters: &[Cluster], owners: &BTreeMap<String, String>) -> Result<Self> {
        if bins.is_empty() && clusters.is_empty() {
            return Err(Error::NothingToReview);
        }
        let subject = |item_id: String, subject_ref: String, bin_key: String, region_ids: &[String]| Subject {
            collage_ref: PathBuf::from("collages").join(format!("{item_id}.png")),
            image_ids: collage::parent_images(region_ids, owners),
            region_ids: region_ids.to_vec(),
            item_id,
            subject_ref,
            bin_key,
        };
        let owners = bins
            .iter()
            .flat_map(|b| &b.region_ids)
            .chain(clusters.iter().flat_map(|c| &c.member_region_ids))
            .filter_map(|r| owners.get(r).map(|img| (r.clone(), img.clone())))
            .collect();
        Ok(SessionPlan {
            session_id: session_id(label),
            label: label.to_string(),
            bins: bins
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    subject(
                        format!("bin-{i:03}"),
                        b.key.to_string(),
                        b.key.to_string(),
                        &b.region_ids,
                    )
                })
                .collect(),
            clusters: clusters
                .iter()
                .map(|c| {
                    subject(
                        format!("cl-{}", c.cluster_id),
                        c.cluster_id.clone(),
                        c.parent_bin_key.to_string(),
                        &c.member_region_ids,
                    )
                })
                .collect(),
            owners,
        })
    }

    /// Renders every subject's collage below `session_dir`. Subjects whose
    /// images all fail to load are logged and left without a collage.
    pub fn render_collages(&self, session_dir: &Path, corpus: &Corpus, config: &CollageConfig) -> Result<()> {
        for s in self.bins.iter().chain(&self.clusters) {
            match collage::collage_of_images(&s.image_ids, corpus, config) {
                Ok(c) => c.write(&session_dir.join(&s.collage_ref))?,
                Err(Error::EmptyCollage) => ::log::warn!("no collage for {}", s.item_id),
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    pub fn subject(&self, item_id: &str) -> Option<&Subject> {
        self.bins.iter().chain(&self.clusters).find(|s| s.item_id == item_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    plan: SessionPlan,
    items: Vec<ApprovalItem>,
    log: Vec<LogRecord>,
    clusters_open: bool,
    /// Surviving members of cluster subjects after background removal.
    surviving: BTreeMap<String, Vec<String>>,
}

fn pending_item(kind: ItemKind, label: &str, s: &Subject) -> ApprovalItem {
    ApprovalItem {
        item_id: s.item_id.clone(),
        kind,
        label: label.to_string(),
        collage_ref: s.collage_ref.clone(),
        subject_ref: s.subject_ref.clone(),
        status: Status::Pending,
        decided_at: None,
        decider: None,
    }
}

impl Session {
    pub fn new(plan: SessionPlan) -> Self {
        let items = plan
            .bins
            .iter()
            .map(|b| pending_item(ItemKind::BinBackground, &plan.label, b))
            .collect();
        let mut s = Session {
            plan,
            items,
            log: Vec::new(),
            clusters_open: false,
            surviving: BTreeMap::new(),
        };
        s.maybe_open_clusters();
        s
    }

    /// Rebuilds a session by applying `records` in order.
    pub fn replay(plan: SessionPlan, records: &[LogRecord]) -> Result<Self> {
        let mut s = Session::new(plan);
        for r in records {
            let item = s.find(&r.item_id)?;
            if item.kind != r.kind {
                return Err(Error::InvalidArgument(format!(
                    "log record for `{}` has kind {:?}, expected {:?}",
                    r.item_id, r.kind, item.kind
                )));
            }
            s.record_decision_at(&r.item_id, r.decision, r.decider, r.timestamp)?;
        }
        Ok(s)
    }

    fn maybe_open_clusters(&mut self) {
        if self.clusters_open || self.items.iter().any(|i| i.status == Status::Pending) {
            return;
        }
        self.clusters_open = true;
        let background: BTreeSet<&String> = self
            .items
            .iter()
            .filter(|i| i.kind == ItemKind::BinBackground && i.status == Status::Approved)
            .filter_map(|i| self.plan.subject(&i.item_id))
            .flat_map(|s| &s.region_ids)
            .collect();
        for c in &self.plan.clusters {
            let left: Vec<String> = c
                .region_ids
                .iter()
                .filter(|r| !background.contains(r))
                .cloned()
                .collect();
            if left.is_empty() {
                continue;
            }
            self.items
                .push(pending_item(ItemKind::ClusterRelevance, &self.plan.label, c));
            self.surviving.insert(c.item_id.clone(), left);
        }
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn session_id(&self) -> &str {
        &self.plan.session_id
    }

    pub fn label(&self) -> &str {
        &self.plan.label
    }

    pub fn items(&self) -> &[ApprovalItem] {
        &self.items
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn find(&self, item_id: &str) -> Result<&ApprovalItem> {
        self.items
            .iter()
            .find(|i| i.item_id == item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))
    }

    pub fn next_pending(&self) -> Option<&ApprovalItem> {
        self.items.iter().find(|i| i.status == Status::Pending)
    }

    pub fn pending_count(&self) -> usize {
        self.items.iter().filter(|i| i.status == Status::Pending).count()
    }

    pub fn is_complete(&self) -> bool {
        self.clusters_open && self.pending_count() == 0
    }

    pub fn record_decision(&mut self, item_id: &str, decision: Decision, decider: Decider) -> Result<&ApprovalItem> {
        self.record_decision_at(item_id, decision, decider, Utc::now())
    }

    pub fn record_decision_at(
        &mut self,
        item_id: &str,
        decision: Decision,
        decider: Decider,
        at: DateTime<Utc>,
    ) -> Result<&ApprovalItem> {
        let idx = self
            .items
            .iter()
            .position(|i| i.item_id == item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        let item = &mut self.items[idx];
        if item.status != Status::Pending {
            return Err(Error::AlreadyDecided(item_id.to_string()));
        }
        item.status = decision.into();
        item.decided_at = Some(at);
        item.decider = Some(decider);
        self.log.push(LogRecord {
            item_id: item_id.to_string(),
            kind: item.kind,
            decision,
            decider,
            timestamp: at,
        });
        self.maybe_open_clusters();
        Ok(&self.items[idx])
    }

    /// Total decisions recorded; equals the log length.
    pub fn decisions(&self) -> usize {
        self.log.len()
    }

    pub fn decisions_of(&self, kind: ItemKind) -> usize {
        self.log.iter().filter(|r| r.kind == kind).count()
    }

    pub fn approved_count(&self) -> usize {
        self.log.iter().filter(|r| r.decision == Decision::Approved).count()
    }

    /// Cluster subjects approved as relevant, with their surviving members.
    pub fn approved_clusters(&self) -> Vec<(String, Vec<String>)> {
        self.items
            .iter()
            .filter(|i| i.kind == ItemKind::ClusterRelevance && i.status == Status::Approved)
            .map(|i| (i.subject_ref.clone(), self.surviving[&i.item_id].clone()))
            .collect()
    }

    /// Regions the item currently stands for.
    pub fn item_regions(&self, item_id: &str) -> Option<&[String]> {
        if let Some(r) = self.surviving.get(item_id) {
            return Some(r);
        }
        self.plan.subject(item_id).map(|s| s.region_ids.as_slice())
    }

    /// Distinct parent images of the regions the item currently stands for.
    pub fn item_images(&self, item_id: &str) -> Vec<String> {
        self.item_regions(item_id)
            .map(|r| collage::parent_images(r, &self.plan.owners))
            .unwrap_or_default()
    }
}

/// A session persisted as `session.json` plus an append-only
/// `decisions.ndjson` in one directory.
pub struct SessionDir {
    pub dir: PathBuf,
}

impl SessionDir {
    pub const PLAN: &'static str = "session.json";
    pub const LOG: &'static str = "decisions.ndjson";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SessionDir { dir: dir.into() }
    }

    pub fn plan_path(&self) -> PathBuf {
        self.dir.join(Self::PLAN)
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(Self::LOG)
    }

    /// Writes the plan and truncates the decision log.
    pub fn create(&self, plan: &SessionPlan) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let json = serde_json::to_string_pretty(plan)?;
        std::fs::write(self.plan_path(), json + "\n").map_err(|e| Error::io(self.plan_path(), e))?;
        std::fs::write(self.log_path(), "").map_err(|e| Error::io(self.log_path(), e))
    }

    pub fn load(&self) -> Result<Session> {
        let path = self.plan_path();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                producer: "construct",
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let plan: SessionPlan = serde_json::from_str(&text)?;
        let records = if self.log_path().exists() {
            log::read_log(&self.log_path())?
        } else {
            Vec::new()
        };
        Session::replay(plan, &records)
    }

    pub fn append(&self, record: &LogRecord) -> Result<()> {
        log::append_record(&self.log_path(), record)
    }

    /// Records a decision and appends it to the on-disk log.
    pub fn decide(
        &self,
        session: &mut Session,
        item_id: &str,
        decision: Decision,
        decider: Decider,
    ) -> Result<ApprovalItem> {
        let item = session.record_decision(item_id, decision, decider)?.clone();
        let record = session.log().last().expect("decision just logged");
        self.append(record)?;
        Ok(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Stage;
    use crate::lsh::BinKey;

    fn owners(n_images: usize, per: usize) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for i in 0..n_images {
            for r in 0..per {
                m.insert(format!("i{i}/r{r:02}"), format!("i{i}"));
            }
        }
        m
    }

    fn bin(k: i64, regions: &[&str]) -> Bin {
        Bin {
            key: BinKey(vec![k]),
            region_ids: regions.iter().map(|s| s.to_string()).collect(),
            size: regions.len(),
            variance: 0.0,
        }
    }

    fn cluster(id: &str, k: i64, regions: &[&str]) -> Cluster {
        Cluster {
            cluster_id: id.into(),
            member_region_ids: regions.iter().map(|s| s.to_string()).collect(),
            exemplar_region_id: None,
            parent_bin_key: BinKey(vec![k]),
            stage: Stage::KMeansSub,
        }
    }

    fn fixture() -> Session {
        let bins = vec![
            bin(0, &["i0/r00", "i1/r00"]),
            bin(1, &["i2/r00", "i3/r00"]),
            bin(2, &["i4/r00"]),
        ];
        let clusters = vec![
            cluster("c0", 0, &["i0/r00"]),
            cluster("c1", 0, &["i1/r00"]),
            cluster("c2", 1, &["i2/r00"]),
            cluster("c3", 1, &["i3/r00"]),
            cluster("c4", 2, &["i4/r00"]),
            cluster("c5", 2, &["i4/r00"]),
            cluster("c6", 1, &["i2/r00", "i3/r00"]),
        ];
        Session::new(SessionPlan::new("tiger", &bins, &clusters, &owners(5, 1)).unwrap())
    }

    #[test]
    fn backgrounds_first_then_surviving_clusters() {
        let mut s = fixture();
        assert_eq!(s.items().len(), 3);
        assert!(s.items().iter().all(|i| i.kind == ItemKind::BinBackground));
        s.record_decision("bin-000", Decision::Rejected, Decider::Human)
            .unwrap();
        s.record_decision("bin-001", Decision::Approved, Decider::Human)
            .unwrap();
        assert_eq!(s.items().len(), 3);
        s.record_decision("bin-002", Decision::Rejected, Decider::Human)
            .unwrap();
        // Bin 1 was background: c2, c3, c6 are gone.
        let ids: Vec<&str> = s.items()[3..].iter().map(|i| i.subject_ref.as_str()).collect();
        assert_eq!(ids, ["c0", "c1", "c4", "c5"]);
        assert_eq!(s.next_pending().unwrap().item_id, "cl-c0");
    }

    #[test]
    fn counters_and_double_decisions() {
        let mut s = fixture();
        s.record_decision("bin-000", Decision::Approved, Decider::Oracle)
            .unwrap();
        assert_eq!(s.decisions(), 1);
        assert!(matches!(
            s.record_decision("bin-000", Decision::Rejected, Decider::Oracle),
            Err(Error::AlreadyDecided(_))
        ));
        assert!(matches!(
            s.record_decision("nope", Decision::Rejected, Decider::Oracle),
            Err(Error::UnknownItem(_))
        ));
        assert_eq!(s.decisions(), 1);
        assert_eq!(s.decisions_of(ItemKind::BinBackground), 1);
    }

    #[test]
    fn thirty_seven_decisions() {
        let clusters: Vec<Cluster> = (0..37).map(|i| cluster(&format!("c{i:02}"), 0, &["i0/r00"])).collect();
        let mut s = Session::new(SessionPlan::new("x", &[], &clusters, &owners(1, 1)).unwrap());
        while let Some(id) = s.next_pending().map(|i| i.item_id.clone()) {
            s.record_decision(&id, Decision::Approved, Decider::Human).unwrap();
        }
        assert_eq!(s.decisions(), 37);
        assert_eq!(s.approved_count(), 37);
    }

    #[test]
    fn replay_reproduces_statuses() {
        let mut s = fixture();
        let mut flip = false;
        while let Some(id) = s.next_pending().map(|i| i.item_id.clone()) {
            let d = if flip { Decision::Approved } else { Decision::Rejected };
            flip = !flip;
            s.record_decision(&id, d, Decider::Human).unwrap();
        }
        let replayed = Session::replay(s.plan().clone(), s.log()).unwrap();
        assert_eq!(replayed, s);
        assert!(replayed.is_complete());
    }

    #[test]
    fn nothing_to_review() {
        assert!(matches!(
            SessionPlan::new("x", &[], &[], &BTreeMap::new()),
            Err(Error::NothingToReview)
        ));
    }

    #[test]
    fn persisted_session_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let sd = SessionDir::new(dir.path().join("s"));
        let mut s = fixture();
        sd.create(s.plan()).unwrap();
        sd.decide(&mut s, "bin-000", Decision::Rejected, Decider::Human)
            .unwrap();
        sd.decide(&mut s, "bin-001", Decision::Rejected, Decider::Human)
            .unwrap();
        let loaded = sd.load().unwrap();
        assert_eq!(loaded, s);
        assert_eq!(loaded.next_pending().unwrap().item_id, "bin-002");
    }
}
