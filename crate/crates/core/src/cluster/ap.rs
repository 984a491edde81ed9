//! Affinity propagation (responsibility/availability message passing).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub convergence_window: usize,
    pub preference: Preference,
    /// Finish with a greedy exemplar search on net similarity.
    pub polish: bool,
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig {
            damping: 0.9,
            max_iterations: 500,
            convergence_window: 50,
            preference: Preference::Median,
            polish: true,
        }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping {} outside [0.5, 1)", self.damping)));
        }
        if self.max_iterations == 0 || self.convergence_window == 0 {
            return Err(Error::Config("AP iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    /// Exemplar indices, ascending.
    pub exemplars: Vec<usize>,
    /// Exemplar index for every point.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl ApResult {
    /// Groups point indices by exemplar, in exemplar order.
    pub fn clusters(&self) -> Vec<(usize, Vec<usize>)> {
        self.exemplars
            .iter()
            .map(|&e| {
                let members = (0..self.assignment.len())
                    .filter(|&i| self.assignment[i] == e)
                    .collect();
                (e, members)
            })
            .collect()
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense similarity matrix `-||x_i - x_k||^2` with the preference on the
/// diagonal.
pub fn similarity_matrix(points: &[Vec<f64>], preference: Preference) -> Vec<f64> {
    let n = points.len();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for k in (i + 1)..n {
            let v = -sq_dist(&points[i], &points[k]);
            s[i * n + k] = v;
            s[k * n + i] = v;
        }
    }
    let p = match preference {
        Preference::Value(v) => v,
        Preference::Median => {
            let mut off: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
                .map(|(i, k)| s[i * n + k])
                .collect();
            if off.is_empty() {
                0.0
            } else {
                off.sort_by(f64::total_cmp);
                let m = off.len();
                if m % 2 == 1 {
                    off[m / 2]
                } else {
                    0.5 * (off[m / 2 - 1] + off[m / 2])
                }
            }
        }
    };
    for i in 0..n {
        s[i * n + i] = p;
    }
    s
}

/// Net similarity of an exemplar set: preferences of the exemplars plus each
/// other point's similarity to its best exemplar.
pub fn net_similarity(s: &[f64], n: usize, exemplars: &[usize]) -> f64 {
    (0..n)
        .map(|i| {
            if exemplars.contains(&i) {
                s[i * n + i]
            } else {
                exemplars
                    .iter()
                    .map(|&k| s[i * n + k])
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .sum()
}

/// Assigns every point to its most similar exemplar (lowest index on ties);
/// exemplars map to themselves.
fn assign(s: &[f64], n: usize, exemplars: &[usize]) -> Vec<usize> {
    (0..n)
        .map(|i| {
            if exemplars.contains(&i) {
                return i;
            }
            let mut best = exemplars[0];
            for &k in &exemplars[1..] {
                if s[i * n + k] > s[i * n + best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn affinity_propagation(points: &[Vec<f64>], config: &ApConfig) -> Result<ApResult> {
    config.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "affinity propagation needs at least one point".into(),
        ));
    }
    if n == 1 {
        return Ok(ApResult {
            exemplars: vec![0],
            assignment: vec![0],
            iterations: 0,
            converged: true,
        });
    }
    let s = similarity_matrix(points, config.preference);
    run_messages(&s, n, config)
}

/// Adds noise of relative size 1e-12 to every entry. Exactly tied
/// similarities (three points with the median preference, say) otherwise make
/// the messages oscillate. Zero entries stay zero, so identical points still
/// resolve to the lowest index.
fn jitter(s: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    s.iter().map(|&v| v + 1e-12 * v.abs() * rng.random::<f64>()).collect()
}

/// Moves each cluster's exemplar to the member with the largest summed
/// similarity to the rest, then reassigns, until nothing moves. Net
/// similarity never decreases.
fn refine(s: &[f64], n: usize, mut exemplars: Vec<usize>) -> Vec<usize> {
    for _ in 0..n {
        let assignment = assign(s, n, &exemplars);
        let mut next: Vec<usize> = exemplars
            .iter()
            .map(|&e| {
                let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == e).collect();
                let score = |j: usize| members.iter().map(|&i| s[i * n + j]).sum::<f64>();
                members
                    .iter()
                    .copied()
                    .fold((e, score(e)), |best, j| {
                        let v = score(j);
                        if v > best.1 || (v == best.1 && j < best.0) {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect();
        next.sort_unstable();
        if next == exemplars {
            break;
        }
        exemplars = next;
    }
    exemplars
}

/// Greedy local search on net similarity: repeatedly applies the best single
/// exemplar addition, removal or swap while it strictly improves.
fn polish(s: &[f64], n: usize, mut exemplars: Vec<usize>) -> Vec<usize> {
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut current = net_similarity(s, n, &exemplars);
    for _ in 0..n * n {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut consider = |cand: Vec<usize>| {
            let v = net_similarity(s, n, &cand);
            if v > current + 1e-12 * scale && best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, cand));
            }
        };
        for j in 0..n {
            if exemplars.contains(&j) {
                if exemplars.len() > 1 {
                    consider(exemplars.iter().copied().filter(|&e| e != j).collect());
                }
            } else {
                let mut with = exemplars.clone();
                with.push(j);
                consider(with);
                for (idx, _) in exemplars.iter().enumerate() {
                    let mut swapped = exemplars.clone();
                    swapped[idx] = j;
                    consider(swapped);
                }
            }
        }
        match best {
            Some((v, mut e)) => {
                e.sort_unstable();
                exemplars = e;
                current = v;
            }
            None => break,
        }
    }
    exemplars
}

/// Message passing on a precomputed `n x n` similarity matrix.
pub fn run_messages(s: &[f64], n: usize, config: &ApConfig) -> Result<ApResult> {
    config.validate()?;
    let exact = s;
    let s = &jitter(s)[..];
    let lambda = config.damping;
    let mut r = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let mut last: Vec<usize> = Vec::new();
    let mut stable = 0usize;
    let mut iterations = 0;
    let mut converged = false;
    let mut col_pos = vec![0.0; n];

    for it in 0..config.max_iterations {
        iterations = it + 1;
        // Responsibilities.
        for i in 0..n {
            let row = i * n;
            let (mut best, mut best_k, mut second) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
            for k in 0..n {
                let v = a[row + k] + s[row + k];
                if v > best {
                    second = best;
                    best = v;
                    best_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == best_k { second } else { best };
                let new = s[row + k] - competitor;
                r[row + k] = lambda * r[row + k] + (1.0 - lambda) * new;
            }
        }
        // Availabilities.
        col_pos.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    col_pos[k] += r[i * n + k].max(0.0);
                }
            }
        }
        for i in 0..n {
            for k in 0..n {
                let new = if i == k {
                    col_pos[k]
                } else {
                    (r[k * n + k] + col_pos[k] - r[i * n + k].max(0.0)).min(0.0)
                };
                a[i * n + k] = lambda * a[i * n + k] + (1.0 - lambda) * new;
            }
        }

        let exemplars: Vec<usize> = (0..n).filter(|&k| a[k * n + k] + r[k * n + k] > 0.0).collect();
        if exemplars == last {
            stable += 1;
        } else {
            stable = 1;
            last = exemplars;
        }
        if stable >= config.convergence_window && !last.is_empty() {
            converged = true;
            break;
        }
    }

    let exemplars = if last.is_empty() {
        // No point claims itself: fall back to the single best exemplar.
        let best = (0..n)
            .map(|k| (k, (0..n).map(|i| exact[i * n + k]).sum::<f64>()))
            .fold(
                (0usize, f64::NEG_INFINITY),
                |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
            )
            .0;
        vec![best]
    } else {
        last
    };
    let mut exemplars = refine(exact, n, exemplars);
    if config.polish {
        exemplars = polish(exact, n, exemplars);
    }
    let assignment = assign(exact, n, &exemplars);
    Ok(ApResult {
        exemplars,
        assignment,
        iterations,
        converged,
    })
}
