//! Multi-feature spectral clustering of sensor profiles.
//!
//! The full-day similarity matrix and the four session matrices are blended
//! into an affinity graph. Sensors are embedded with the smallest
//! generalized eigenvectors of `(D - A) u = λ D u`, which share their
//! eigenvalues with the normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
//! The number of clusters is the Davies–Bouldin minimizer over a range of
//! candidates, and the final partition comes from seeded k-means.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansParams};
use crate::metrics::davies_bouldin;
use crate::profiling::{DayType, DayTypeProfile};
use crate::similarity::{
    session_slice, similarity_matrix, validate_sessions, Kernel, SessionSpec, SimilarityMatrix,
};

/// Blend weights: `w1` for the session matrices, `w2` for the full day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { w1: 0.5, w2: 0.5 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) || (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "weights must be non-negative and sum to 1, got w1 = {}, w2 = {}",
                self.w1, self.w2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
    pub weights: Weights,
}

/// `A = w1/4 · (S_f1 + S_f2 + S_f3 + S_f4) + w2 · S_U`, entry-wise.
pub fn affinity(
    full_day: &SimilarityMatrix,
    sessions: &[SimilarityMatrix; 4],
    weights: Weights,
) -> Result<AffinityMatrix> {
    weights.validate()?;
    for s in sessions {
        if s.ids != full_day.ids {
            return Err(Error::Alignment(
                "session and full-day matrices list different sensor ids".into(),
            ));
        }
        if s.values.shape() != full_day.values.shape() {
            return Err(Error::Alignment(format!(
                "matrix shapes differ: {:?} vs {:?}",
                s.values.shape(),
                full_day.values.shape()
            )));
        }
    }
    let session_sum = sessions
        .iter()
        .fold(DMatrix::zeros(full_day.len(), full_day.len()), |acc, s| acc + &s.values);
    Ok(AffinityMatrix {
        ids: full_day.ids.clone(),
        values: session_sum * (weights.w1 / 4.0) + &full_day.values * weights.w2,
        weights,
    })
}

/// Weighted degree `D_ii = Σ_j A_ij`, returned as the diagonal.
pub fn degree(a: &AffinityMatrix) -> Result<DVector<f64>> {
    let d = DVector::from_iterator(a.values.nrows(), a.values.row_iter().map(|r| r.sum()));
    if let Some(i) = d.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::IsolatedNode(a.ids[i].clone()));
    }
    Ok(d)
}

/// Normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
pub fn laplacian(a: &AffinityMatrix, degree: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = a.values.nrows();
    if degree.len() != n {
        return Err(Error::Dimension { expected: n, actual: degree.len() });
    }
    if let Some(i) = degree.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::IsolatedNode(a.ids[i].clone()));
    }
    let inv_sqrt = degree.map(|d| 1.0 / d.sqrt());
    let mut l = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= inv_sqrt[i] * a.values[(i, j)] * inv_sqrt[j];
        }
    }
    // exact symmetry regardless of rounding order
    Ok((&l + l.transpose()) * 0.5)
}

/// Smallest generalized eigenpairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// n × k_max; column c solves `(D - A) u = λ_c D u` with `uᵀ D u = 1`.
    pub vectors: DMatrix<f64>,
}

impl Embedding {
    /// First `k` columns with each row scaled to unit length.
    pub fn normalized_rows(&self, k: usize) -> Vec<Vec<f64>> {
        self.vectors
            .columns(0, k)
            .row_iter()
            .map(|r| {
                let norm = r.norm();
                if norm > 0.0 {
                    r.iter().map(|x| x / norm).collect()
                } else {
                    r.iter().copied().collect()
                }
            })
            .collect()
    }
}

/// Solves for the `k_max` smallest generalized eigenvectors through the
/// symmetric problem on the normalized Laplacian (`u = D^{-1/2} v`).
pub fn embed(laplacian: &DMatrix<f64>, degree: &DVector<f64>, k_max: usize) -> Result<Embedding> {
    let n = laplacian.nrows();
    if k_max == 0 || k_max > n {
        return Err(Error::Config(format!("embedding dimension {k_max} must lie in 1..={n}")));
    }
    if !laplacian.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("Laplacian contains non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(laplacian.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numeric(format!(
            "eigensolver did not converge; {}",
            condition_report(degree)
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let inv_sqrt = degree.map(|d| 1.0 / d.sqrt());
    let mut vectors = DMatrix::zeros(n, k_max);
    let mut eigenvalues = Vec::with_capacity(k_max);
    for (c, &idx) in order.iter().take(k_max).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // canonical sign: largest-magnitude entry positive
        let pivot = v.iter().enumerate().fold(0, |best, (i, x)| {
            if x.abs() > v[best].abs() + 1e-12 { i } else { best }
        });
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        let u = v.component_mul(&inv_sqrt);

        // residual of the generalized problem: (D - A) u - λ D u = D^{1/2} (L v - λ v)
        let r = (laplacian * &v - &v * lambda).component_mul(&degree.map(f64::sqrt));
        if r.norm() > 1e-8 * u.norm() {
            return Err(Error::Numeric(format!(
                "eigenpair {c} residual {:.3e} exceeds tolerance; {}",
                r.norm(),
                condition_report(degree)
            )));
        }
        vectors.set_column(c, &u);
        eigenvalues.push(lambda);
    }
    Ok(Embedding { eigenvalues, vectors })
}

fn condition_report(degree: &DVector<f64>) -> String {
    let min = degree.min();
    let max = degree.max();
    format!("degree range [{min:.3e}, {max:.3e}], ratio {:.3e}", max / min)
}

/// Candidate scores and the chosen cluster count.
#[derive(Clone, Debug, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub scores: BTreeMap<usize, f64>,
}

/// Picks the cluster count minimizing the Davies–Bouldin index of k-means
/// on the row-normalized leading `k` eigenvectors. Ties go to the smaller k.
pub fn select_k(embedding: &Embedding, k_range: (usize, usize), params: &KMeansParams) -> Result<KSelection> {
    let n = embedding.vectors.nrows();
    let (lo, hi) = k_range;
    let hi = hi.min(n.saturating_sub(1)).min(embedding.vectors.ncols());
    if lo < 2 || lo > hi {
        return Err(Error::Config(format!(
            "k range [{}, {}] is empty for {n} sensors",
            k_range.0, k_range.1
        )));
    }
    let mut scores = BTreeMap::new();
    for k in lo..=hi {
        let points = embedding.normalized_rows(k);
        let fit = match kmeans(&points, k, params) {
            Ok(fit) => fit,
            Err(e) => {
                warn!("k = {k} skipped: {e}");
                continue;
            }
        };
        match davies_bouldin(&points, &fit.assignments, &fit.centroids) {
            Some(score) => {
                scores.insert(k, score);
            }
            None => warn!("k = {k} skipped: degenerate clusters"),
        }
    }
    let k = scores
        .iter()
        .fold(None::<(usize, f64)>, |best, (&k, &s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((k, s)),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InsufficientData("every candidate k was degenerate".into()))?;
    Ok(KSelection { k, scores })
}

/// Settings for one day-type clustering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub weights: Weights,
    pub window_bins: usize,
    pub sessions: [SessionSpec; 4],
    pub k_range: (usize, usize),
    pub kmeans: KMeansParams,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            weights: Weights::default(),
            window_bins: 2,
            sessions: SessionSpec::defaults(),
            k_range: (2, 10),
            kmeans: KMeansParams::default(),
        }
    }
}

/// Output of spectral clustering on a given affinity graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFit {
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub embedding: Embedding,
    pub db_scores: BTreeMap<usize, f64>,
    pub k: usize,
    /// In affinity row order.
    pub assignments: Vec<usize>,
}

/// Degree → Laplacian → embedding → k selection → k-means.
pub fn cluster_affinity(a: &AffinityMatrix, k_range: (usize, usize), params: &KMeansParams) -> Result<SpectralFit> {
    let n = a.values.nrows();
    let d = degree(a)?;
    let l = laplacian(a, &d)?;
    let k_max = k_range.1.min(n.saturating_sub(1)).max(1);
    let embedding = embed(&l, &d, k_max)?;
    let selection = select_k(&embedding, k_range, params)?;
    let fit = kmeans(&embedding.normalized_rows(selection.k), selection.k, params)?;
    Ok(SpectralFit {
        degree: d,
        laplacian: l,
        embedding,
        db_scores: selection.scores,
        k: selection.k,
        assignments: fit.assignments,
    })
}

/// Everything produced while clustering one generic day type.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub label: DayType,
    pub ids: Vec<String>,
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub embedding: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub db_scores: BTreeMap<usize, f64>,
    pub seed: u64,
    pub full_day: SimilarityMatrix,
    pub sessions: [SimilarityMatrix; 4],
    pub affinity: AffinityMatrix,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    /// Gap-filled 288-bin profiles in `ids` order.
    pub profiles: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn assignment_vec(&self) -> Vec<usize> {
        self.ids.iter().map(|id| self.assignments[id]).collect()
    }
}

/// Clusters the profiles of one day type end to end.
pub fn cluster_pipeline(profiles: &[DayTypeProfile], config: &ClusterConfig) -> Result<ClusterModel> {
    if profiles.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "clustering needs at least 3 sensors, got {}",
            profiles.len()
        )));
    }
    validate_sessions(&config.sessions)?;
    let label = profiles[0].label;
    if let Some(p) = profiles.iter().find(|p| p.label != label) {
        return Err(Error::Alignment(format!(
            "mixed day types: {} and {}",
            label, p.label
        )));
    }
    let ids: Vec<String> = profiles.iter().map(|p| p.sensor_id.clone()).collect();
    let filled: Vec<Vec<f64>> = profiles.iter().map(|p| p.filled()).collect::<Result<_>>()?;
    let kernel = Kernel::Wied { window: config.window_bins };

    let full: Vec<&[f64]> = filled.iter().map(Vec::as_slice).collect();
    let full_day = similarity_matrix(&ids, &full, kernel)?;
    let session_matrix = |s: &SessionSpec| {
        let slices: Vec<&[f64]> = filled.iter().map(|p| session_slice(p, s)).collect();
        similarity_matrix(&ids, &slices, kernel)
    };
    let sessions = [
        session_matrix(&config.sessions[0])?,
        session_matrix(&config.sessions[1])?,
        session_matrix(&config.sessions[2])?,
        session_matrix(&config.sessions[3])?,
    ];
    let a = affinity(&full_day, &sessions, config.weights)?;
    let fit = cluster_affinity(&a, config.k_range, &config.kmeans)?;

    Ok(ClusterModel {
        label,
        assignments: ids.iter().cloned().zip(fit.assignments.iter().copied()).collect(),
        ids,
        k: fit.k,
        embedding: fit.embedding.vectors,
        eigenvalues: fit.embedding.eigenvalues,
        db_scores: fit.db_scores,
        seed: config.kmeans.seed,
        full_day,
        sessions,
        affinity: a,
        degree: fit.degree,
        laplacian: fit.laplacian,
        profiles: filled,
    })
}
