//! p-stable LSH used as a coarse clusterer.
//!
//! Each of `k_h` hash functions projects a vector onto a Gaussian direction,
//! shifts it by a uniform offset and quantizes by the bucket width `w`; the
//! concatenated integers form the bin key. One table only: bins are the
//! coarse clusters themselves, not a recall structure.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HasherConfig {
    pub dim: usize,
    /// Hash functions concatenated per key.
    pub k_h: usize,
    /// Bucket width.
    pub w: f64,
    pub seed: u64,
}

impl Default for HasherConfig {
    fn default() -> Self {
        HasherConfig {
            dim: crate::features::REGION_DIM,
            k_h: 8,
            w: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey(pub Vec<i64>);

impl fmt::Display for BinKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(":"))
    }
}

impl FromStr for BinKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(':')
            .map(|p| p.parse::<i64>().map_err(|_| format!("bad bin key `{s}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(BinKey)
    }
}

#[derive(Debug, Clone)]
pub struct Hasher {
    config: HasherConfig,
    projections: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl Hasher {
    pub fn new(config: HasherConfig) -> Result<Self> {
        if config.k_h == 0 {
            return Err(Error::Config("lsh k_h must be at least 1".into()));
        }
        if !(config.w > 0.0 && config.w.is_finite()) {
            return Err(Error::Config("lsh bucket width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let projections = (0..config.k_h)
            .map(|_| (0..config.dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let offsets = (0..config.k_h).map(|_| rng.random_range(0.0..config.w)).collect();
        Ok(Hasher {
            config,
            projections,
            offsets,
        })
    }

    pub fn config(&self) -> &HasherConfig {
        &self.config
    }

    pub fn hash(&self, x: &[f64]) -> Result<BinKey> {
        if x.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: x.len(),
            });
        }
        Ok(BinKey(
            self.projections
                .iter()
                .zip(&self.offsets)
                .map(|(a, b)| {
                    let dot: f64 = a.iter().zip(x).map(|(p, v)| p * v).sum();
                    ((dot + b) / self.config.w).floor() as i64
                })
                .collect(),
        ))
    }

    /// FNV-1a over the bit patterns of all projection entries and offsets.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.projections.iter().flatten().chain(&self.offsets) {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

pub fn build_hasher(config: HasherConfig) -> Result<Hasher> {
    Hasher::new(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub key: BinKey,
    /// Sorted by region id.
    pub region_ids: Vec<String>,
    pub size: usize,
    /// Mean per-dimension variance of the member vectors.
    pub variance: f64,
}

fn mean_variance(rows: &[&[f64]]) -> f64 {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, |r| r.len());
    if dim == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for d in 0..dim {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        total += rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
    }
    total / dim as f64
}

/// Partitions regions by hash key. Output is ordered by key.
pub fn bucketize<S: AsRef<str> + Sync>(hasher: &Hasher, regions: &[(S, Vec<f64>)]) -> Result<Vec<Bin>> {
    let keys: Vec<BinKey> = regions.par_iter().map(|(_, v)| hasher.hash(v)).collect::<Result<_>>()?;
    let mut groups: BTreeMap<BinKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_by(|&a, &b| regions[a].0.as_ref().cmp(regions[b].0.as_ref()));
            let rows: Vec<&[f64]> = members.iter().map(|&i| regions[i].1.as_slice()).collect();
            Bin {
                key,
                size: members.len(),
                variance: mean_variance(&rows),
                region_ids: members.iter().map(|&i| regions[i].0.as_ref().to_string()).collect(),
            }
        })
        .collect())
}

/// Size descending, then variance ascending, then key.
pub fn bin_order(a: &Bin, b: &Bin) -> Ordering {
    b.size
        .cmp(&a.size)
        .then(a.variance.total_cmp(&b.variance))
        .then_with(|| a.key.cmp(&b.key))
}

/// Largest bins first, stopping at the shortest prefix whose region count
/// strictly exceeds twice the number of candidate images. Returns every bin
/// when the total never exceeds that bound.
pub fn select_bins(bins: &[Bin], n_candidates: usize) -> Vec<Bin> {
    let mut sorted = bins.to_vec();
    sorted.sort_by(bin_order);
    let bound = 2 * n_candidates;
    let mut total = 0;
    let mut out = Vec::new();
    for b in sorted {
        total += b.size;
        out.push(b);
        if total > bound {
            break;
        }
    }
    out
}

pub fn write_bin_table(path: &Path, bins: &[Bin]) -> Result<()> {
    let text: String = bins
        .iter()
        .map(|b| {
            format!(
                "{}\t{}\t{}\t{}\n",
                b.key,
                b.size,
                table::fmt_f64(b.variance),
                b.region_ids.join(",")
            )
        })
        .collect();
    table::write_text(path, &text)
}

pub fn read_bin_table(path: &Path) -> Result<Vec<Bin>> {
    table::read_rows(path)?
        .into_iter()
        .map(|(line, row)| {
            let f = table::fields(path, line, &row, 4)?;
            let region_ids: Vec<String> = table::split_list(f[3]).map(str::to_string).collect();
            let size: usize = table::parse_num(path, line, f[1], "size")?;
            if size != region_ids.len() {
                return Err(Error::parse(path, line, "size does not match member count"));
            }
            Ok(Bin {
                key: f[0].parse().map_err(|e: String| Error::parse(path, line, e))?,
                size,
                variance: table::parse_num(path, line, f[2], "variance")?,
                region_ids,
            })
        })
        .collect()
}
