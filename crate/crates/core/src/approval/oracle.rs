//! Ground-truth stand-in for the human reviewer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Decider, Decision, ItemKind, Session};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Majority threshold.
    pub theta: f64,
    /// Minimum distinct truth labels for a background bin.
    pub min_background_labels: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            theta: 0.5,
            min_background_labels: 3,
        }
    }
}

fn truth_sets<'a>(corpus: &'a Corpus, images: &[String]) -> Result<Vec<&'a std::collections::BTreeSet<String>>> {
    images
        .iter()
        .map(|id| {
            corpus
                .require(id)?
                .truth_labels
                .as_ref()
                .ok_or_else(|| Error::MissingTruth(id.clone()))
        })
        .collect()
}

/// Fraction of images whose truth contains `label`.
pub fn relevant_fraction(corpus: &Corpus, images: &[String], label: &str) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let sets = truth_sets(corpus, images)?;
    Ok(sets.iter().filter(|t| t.contains(label)).count() as f64 / images.len() as f64)
}

/// A bin is background when its images span at least `min_background_labels`
/// truth labels and no label reaches `theta`.
pub fn is_background(corpus: &Corpus, images: &[String], config: &OracleConfig) -> Result<bool> {
    if images.is_empty() {
        return Ok(false);
    }
    let sets = truth_sets(corpus, images)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &sets {
        for l in t.iter() {
            *counts.entry(l).or_default() += 1;
        }
    }
    let n = images.len() as f64;
    let dominant = counts.values().any(|&c| c as f64 / n >= config.theta);
    Ok(counts.len() >= config.min_background_labels && !dominant)
}

/// Decides every pending item, including cluster items opened by the bin
/// phase, using ground truth.
pub fn oracle_approve(session: &mut Session, corpus: &Corpus, config: &OracleConfig) -> Result<()> {
    while let Some(item) = session.next_pending().cloned() {
        let images = session.item_images(&item.item_id);
        let yes = match item.kind {
            ItemKind::BinBackground => is_background(corpus, &images, config)?,
            ItemKind::ClusterRelevance => relevant_fraction(corpus, &images, session.label())? >= config.theta,
        };
        let decision = if yes { Decision::Approved } else { Decision::Rejected };
        session.record_decision(&item.item_id, decision, Decider::Oracle)?;
    }
    Ok(())
}
