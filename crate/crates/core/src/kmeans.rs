//! Seeded k-means with k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub seed: u64,
    /// Independent restarts; the lowest-inertia run wins.
    pub n_init: usize,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            seed: 42,
            n_init: 10,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    /// Cluster index per point, relabelled by first occurrence.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn distinct_points(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            // every point coincides with a centroid already
            d2.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignments;
        assignments = next;

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        // Re-seed empty clusters with the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&i, &j| {
                    sq_dist(&points[i], &centroids[assignments[i]])
                        .total_cmp(&sq_dist(&points[j], &centroids[assignments[j]]))
                        .then(j.cmp(&i))
                });
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                counts[c] = 1;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    KMeansResult {
        assignments,
        centroids,
        inertia,
    }
}

/// Renumbers clusters in order of first appearance.
pub fn canonical_labels(assignments: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map: Vec<usize> = Vec::new();
    let relabelled = assignments
        .iter()
        .map(|&a| match map.iter().position(|&m| m == a) {
            Some(i) => i,
            None => {
                map.push(a);
                map.len() - 1
            }
        })
        .collect();
    (relabelled, map)
}

/// Partitions `points` into `k` non-empty clusters.
///
/// Deterministic for a fixed seed. Fails when `k < 2`, when there are fewer
/// points than clusters, or when fewer than `k` points are distinct.
pub fn kmeans(points: &[Vec<f64>], k: usize, params: &KMeansParams) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::Config(format!("k-means needs k >= 2, got {k}")));
    }
    if points.len() < k {
        return Err(Error::Config(format!(
            "k-means with k = {k} needs at least {k} points, got {}",
            points.len()
        )));
    }
    if distinct_points(points) < k {
        return Err(Error::InsufficientData(format!(
            "fewer than {k} distinct points; clustering is degenerate"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..params.n_init.max(1) {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, params.max_iter.max(1));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let (assignments, order) = canonical_labels(&best.assignments);
    let centroids = order.iter().map(|&c| best.centroids[c].clone()).collect();
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia: best.inertia,
    })
}
