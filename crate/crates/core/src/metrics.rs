//! Cluster quality scores.

use crate::kmeans::sq_dist;

/// Davies–Bouldin index (lower is better).
///
/// Scatter is the mean Euclidean distance of members to their centroid.
/// Returns `None` with fewer than two clusters, an empty cluster, or two
/// coincident centroids.
pub fn davies_bouldin(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> Option<f64> {
    let k = centroids.len();
    if k < 2 {
        return None;
    }
    let mut scatter = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        scatter[a] += sq_dist(p, &centroids[a]).sqrt();
        counts[a] += 1;
    }
    if counts.contains(&0) {
        return None;
    }
    for (s, &c) in scatter.iter_mut().zip(&counts) {
        *s /= c as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = sq_dist(&centroids[i], &centroids[j]).sqrt();
            if sep == 0.0 {
                return None;
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Some(total / k as f64)
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len() as u64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pair-counting definition, independent of the contingency formula.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total: f64 = both + only_a + only_b + neither;
        let expected = (both + only_a) * (both + only_b) / total;
        let max = ((both + only_a) + (both + only_b)) / 2.0;
        (both - expected) / (max - expected)
    }

    #[test]
    fn ari_matches_pair_counting() {
        let a = [0, 0, 0, 1, 1, 1, 2, 2];
        let b = [0, 0, 1, 1, 1, 2, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - ari_by_pairs(&a, &b)).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&a, &a), 1.0);
        let relabelled = [2, 2, 2, 0, 0, 0, 1, 1];
        assert!((adjusted_rand_index(&a, &relabelled) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn db_hand_value() {
        // two clusters of two points each, scatter 0.5, centroid gap 4
        let pts = vec![vec![0.0], vec![1.0], vec![4.0], vec![5.0]];
        let db = davies_bouldin(&pts, &[0, 0, 1, 1], &[vec![0.5], vec![4.5]]).unwrap();
        assert!((db - 0.25).abs() < 1e-15);
        assert!(davies_bouldin(&pts, &[0, 0, 0, 0], &[vec![2.5], vec![2.5]]).is_none());
    }
}
