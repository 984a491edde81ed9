//! Brute-force reference implementations shared by the integration tests.
//! Each one is written directly from the definition, without reusing library
//! code, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use std::collections::BTreeSet;

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median of the off-diagonal negative squared distances.
pub fn median_preference(points: &[Vec<f64>]) -> f64 {
    let mut v = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for (k, q) in points.iter().enumerate() {
            if i != k {
                v.push(-dist2(p, q));
            }
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// Net similarity of an exemplar set: preference for every exemplar plus,
/// for every other point, its similarity to the closest exemplar.
pub fn exemplar_objective(points: &[Vec<f64>], exemplars: &[usize], preference: f64) -> f64 {
    (0..points.len())
        .map(|i| {
            if exemplars.contains(&i) {
                preference
            } else {
                exemplars
                    .iter()
                    .map(|&k| -dist2(&points[i], &points[k]))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .sum()
}

/// Best objective over all 2^n - 1 non-empty exemplar sets.
pub fn best_objective(points: &[Vec<f64>], preference: f64) -> f64 {
    let n = points.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << n) {
        let ex: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        best = best.max(exemplar_objective(points, &ex, preference));
    }
    best
}

/// Precision at every relevant rank, each counted from scratch.
pub fn brute_average_precision(ranked: &[&str], relevant: &BTreeSet<String>) -> f64 {
    let mut precisions = Vec::new();
    for r in 0..ranked.len() {
        if relevant.contains(ranked[r]) {
            let top = &ranked[..=r];
            let hits = top.iter().filter(|id| relevant.contains(**id)).count();
            precisions.push(hits as f64 / (r + 1) as f64);
        }
    }
    if precisions.is_empty() {
        0.0
    } else {
        precisions.iter().sum::<f64>() / precisions.len() as f64
    }
}

/// Order indices by score descending, then id ascending, by repeated
/// selection of the best remaining item.
pub fn selection_rank(scores: &[(String, f64)]) -> Vec<&str> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for j in 1..left.len() {
            let (a, b) = (&scores[left[j]], &scores[left[best]]);
            if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                best = j;
            }
        }
        out.push(scores[left.remove(best)].0.as_str());
    }
    out
}

/// Minimum k-means objective over every assignment of points to `k`
/// non-empty groups.
pub fn best_partition_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        if used.len() == k {
            let mut total = 0.0;
            for g in 0..k {
                let members: Vec<&Vec<f64>> = (0..n).filter(|&i| labels[i] == g).map(|i| &points[i]).collect();
                let dim = points[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                total += members.iter().map(|p| dist2(p, &mean)).sum::<f64>();
            }
            best = best.min(total);
        }
        // Next assignment in base-k counting order.
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// The `k` nearest training points by full sort on (distance, id).
pub fn brute_knn<'a>(query: &[f64], train: &'a [(String, Vec<f64>, bool)], k: usize) -> Vec<&'a str> {
    let mut all: Vec<(f64, &str)> = train.iter().map(|(id, v, _)| (dist2(query, v), id.as_str())).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Number of leading bins (in review order) the stopping rule must select:
/// the shortest prefix whose size strictly exceeds `2 * n_candidates`, or
/// every bin if none does.
pub fn expected_prefix_len(sizes_in_order: &[usize], n_candidates: usize) -> usize {
    for m in 0..=sizes_in_order.len() {
        let total: usize = sizes_in_order[..m].iter().sum();
        if total > 2 * n_candidates {
            return m;
        }
    }
    sizes_in_order.len()
}

/// Collision probability of one p-stable Gaussian hash with width `w` for
/// two points at distance `c`.
pub fn gaussian_collision_probability(c: f64, w: f64) -> f64 {
    if c == 0.0 {
        return 1.0;
    }
    let r = w / c;
    1.0 - 2.0 * normal_cdf(-r) - 2.0 / ((2.0 * std::f64::consts::PI).sqrt() * r) * (1.0 - (-r * r / 2.0).exp())
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error below 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
