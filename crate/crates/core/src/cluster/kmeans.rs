//! Fixed-k Lloyd iterations with farthest-point seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ap::sq_dist;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Non-empty clusters as ascending point indices, ordered by their
    /// smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each Lloyd iteration.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

/// First center drawn from `seed`; each further center is the point farthest
/// from all chosen centers (lowest index on ties). Seeding stops early when
/// every remaining point coincides with a center.
pub fn farthest_point_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centers = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let (idx, d) = nearest.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
        );
        if d <= 0.0 {
            break;
        }
        centers.push(idx);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &points[idx]));
        }
    }
    centers
}

fn nearest_center(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    if points.is_empty() {
        return Ok(KMeansResult {
            clusters: Vec::new(),
            centroids: Vec::new(),
            inertia: Vec::new(),
            iterations: 0,
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }
    let mut centroids: Vec<Vec<f64>> = farthest_point_seeds(points, k, seed)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest_center(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        for (c, mu) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                mu[d] = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
        inertia.push(
            points
                .iter()
                .zip(&assignment)
                .map(|(p, &a)| sq_dist(p, &centroids[a]))
                .sum(),
        );
        if !changed {
            break;
        }
    }
    let mut groups: Vec<(Vec<usize>, Vec<f64>)> = centroids
        .into_iter()
        .enumerate()
        .map(|(c, mu)| ((0..points.len()).filter(|&i| assignment[i] == c).collect(), mu))
        .filter(|(m, _): &(Vec<usize>, Vec<f64>)| !m.is_empty())
        .collect();
    groups.sort_by_key(|(m, _)| m[0]);
    let (clusters, centroids) = groups.into_iter().unzip();
    Ok(KMeansResult {
        clusters,
        centroids,
        inertia,
        iterations,
    })
}
