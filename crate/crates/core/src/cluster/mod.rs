//! Two-stage refinement of selected LSH bins.
//!
//! Stage one runs affinity propagation on region features inside each bin.
//! Stage two splits every AP cluster with k-means (k = 3 by default), where
//! each region is represented by the global feature of its parent image.

pub mod ap;
pub mod kmeans;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ap::{affinity_propagation, ApConfig, ApResult, Preference};
pub use kmeans::{kmeans, KMeansResult};

use crate::error::{Error, Result};
use crate::lsh::{Bin, BinKey};
use crate::store::FeatureStore;
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "ap")]
    Ap,
    #[serde(rename = "kmeans-sub")]
    KMeansSub,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ap => "ap",
            Stage::KMeansSub => "kmeans-sub",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ap" => Ok(Stage::Ap),
            "kmeans-sub" => Ok(Stage::KMeansSub),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// `b<bin>.a<ap cluster>.k<sub cluster>` for stage-two clusters.
    pub cluster_id: String,
    /// Sorted.
    pub member_region_ids: Vec<String>,
    pub exemplar_region_id: Option<String>,
    pub parent_bin_key: BinKey,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub ap: ApConfig,
    /// Sub-clusters per AP cluster.
    pub k: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            ap: ApConfig::default(),
            k: 3,
        }
    }
}

fn refine_one(
    bin_index: usize,
    bin: &Bin,
    regions: &FeatureStore,
    globals: &FeatureStore,
    config: &RefineConfig,
    seed: u64,
) -> Result<Vec<Cluster>> {
    let missing = |kind, id: &str| Error::MissingFeature {
        kind,
        id: id.to_string(),
    };
    let points: Vec<Vec<f64>> = bin
        .region_ids
        .iter()
        .map(|id| regions.get(id).ok_or_else(|| missing("region", id)))
        .collect::<Result<_>>()?;
    let context: Vec<Vec<f64>> = bin
        .region_ids
        .iter()
        .map(|id| {
            let image = regions.image_of(id).ok_or_else(|| missing("region", id))?;
            globals.get(image).ok_or_else(|| missing("global", id))
        })
        .collect::<Result<_>>()?;

    let ap = affinity_propagation(&points, &config.ap)?;
    let mut out = Vec::new();
    for (a, (_, members)) in ap.clusters().into_iter().enumerate() {
        let sub_points: Vec<Vec<f64>> = members.iter().map(|&i| context[i].clone()).collect();
        let km = kmeans(&sub_points, config.k, seed)?;
        for (k, sub) in km.clusters.iter().enumerate() {
            let mut ids: Vec<String> = sub.iter().map(|&j| bin.region_ids[members[j]].clone()).collect();
            ids.sort();
            out.push(Cluster {
                cluster_id: format!("b{bin_index:03}.a{a:03}.k{k}"),
                member_region_ids: ids,
                exemplar_region_id: None,
                parent_bin_key: bin.key.clone(),
                stage: Stage::KMeansSub,
            });
        }
    }
    Ok(out)
}

/// Runs both stages over every bin. Bins are processed in parallel; the
/// output order follows the input bin order.
pub fn refine_bins(
    bins: &[Bin],
    regions: &FeatureStore,
    globals: &FeatureStore,
    config: &RefineConfig,
    seed: u64,
) -> Result<Vec<Cluster>> {
    config.ap.validate()?;
    let per_bin: Vec<Vec<Cluster>> = bins
        .par_iter()
        .enumerate()
        .map(|(i, b)| refine_one(i, b, regions, globals, config, seed))
        .collect::<Result<_>>()?;
    Ok(per_bin.into_iter().flatten().collect())
}

/// Stage-one clusters only, with exemplars. Used for inspection.
pub fn ap_clusters(bin_index: usize, bin: &Bin, regions: &FeatureStore, config: &ApConfig) -> Result<Vec<Cluster>> {
    let points: Vec<Vec<f64>> = bin
        .region_ids
        .iter()
        .map(|id| {
            regions.get(id).ok_or_else(|| Error::MissingFeature {
                kind: "region",
                id: id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let ap = affinity_propagation(&points, config)?;
    Ok(ap
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(a, (e, members))| Cluster {
            cluster_id: format!("b{bin_index:03}.a{a:03}"),
            member_region_ids: members.iter().map(|&i| bin.region_ids[i].clone()).collect(),
            exemplar_region_id: Some(bin.region_ids[e].clone()),
            parent_bin_key: bin.key.clone(),
            stage: Stage::Ap,
        })
        .collect())
}

pub fn write_cluster_table(path: &Path, clusters: &[Cluster]) -> Result<()> {
    let text: String = clusters
        .iter()
        .map(|c| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                c.cluster_id,
                c.parent_bin_key,
                c.stage,
                c.exemplar_region_id.as_deref().unwrap_or("-"),
                c.member_region_ids.join(",")
            )
        })
        .collect();
    table::write_text(path, &text)
}

pub fn read_cluster_table(path: &Path) -> Result<Vec<Cluster>> {
    table::read_rows(path)?
        .into_iter()
        .map(|(line, row)| {
            let f = table::fields(path, line, &row, 5)?;
            let bad = |e: String| Error::parse(path, line, e);
            Ok(Cluster {
                cluster_id: f[0].to_string(),
                parent_bin_key: f[1].parse().map_err(bad)?,
                stage: f[2].parse().map_err(bad)?,
                exemplar_region_id: (f[3] != "-").then(|| f[3].to_string()),
                member_region_ids: table::split_list(f[4]).map(str::to_string).collect(),
            })
        })
        .collect()
}
