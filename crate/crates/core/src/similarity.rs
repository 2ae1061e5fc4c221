//! Pairwise profile similarity: the windowed inverse distance kernel, the
//! baseline metrics it is compared against, and temporal sessions.

use std::fmt;
use std::io::Write;

use chrono::NaiveTime;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiling::bin_of;

/// Daytime session a similarity matrix is restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Session {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl Session {
    pub fn short(self) -> &'static str {
        match self {
            Session::Morning => "f1",
            Session::Afternoon => "f2",
            Session::Evening => "f3",
            Session::Night => "f4",
        }
    }
}

impl fmt::Display for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

mod hhmm {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let text = String::deserialize(d)?;
        NaiveTime::parse_from_str(&text, "%H:%M").map_err(serde::de::Error::custom)
    }
}

/// A session as an inclusive time-of-day interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub name: Session,
    #[serde(with = "hhmm")]
    pub start: NaiveTime,
    #[serde(with = "hhmm")]
    pub end: NaiveTime,
}

impl SessionSpec {
    fn hm(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    /// Morning, afternoon, evening and night sessions covering 06:00–23:59.
    pub fn defaults() -> [SessionSpec; 4] {
        [
            SessionSpec { name: Session::Morning, start: Self::hm(6, 0), end: Self::hm(10, 59) },
            SessionSpec { name: Session::Afternoon, start: Self::hm(11, 0), end: Self::hm(13, 59) },
            SessionSpec { name: Session::Evening, start: Self::hm(14, 0), end: Self::hm(17, 59) },
            SessionSpec { name: Session::Night, start: Self::hm(18, 0), end: Self::hm(23, 59) },
        ]
    }

    /// Inclusive bin range covered by the session.
    pub fn bins(&self) -> std::ops::RangeInclusive<usize> {
        bin_of(self.start)..=bin_of(self.end)
    }
}

/// Checks that sessions are well-formed and do not overlap.
pub fn validate_sessions(sessions: &[SessionSpec]) -> Result<()> {
    for s in sessions {
        if s.end < s.start {
            return Err(Error::Config(format!("session {} ends before it starts", s.name)));
        }
    }
    for (i, a) in sessions.iter().enumerate() {
        for b in &sessions[i + 1..] {
            let (ra, rb) = (a.bins(), b.bins());
            if ra.start() <= rb.end() && rb.start() <= ra.end() {
                return Err(Error::Config(format!("sessions {} and {} overlap", a.name, b.name)));
            }
        }
    }
    Ok(())
}

/// Bins of a 288-bin profile that fall inside the session.
pub fn session_slice<'a>(profile: &'a [f64], session: &SessionSpec) -> &'a [f64] {
    let r = session.bins();
    &profile[*r.start()..=(*r.end()).min(profile.len() - 1)]
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), actual: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Dimension { expected: 1, actual: 0 });
    }
    Ok(())
}

fn directed_window_sum(a: &[f64], b: &[f64], window: usize) -> f64 {
    let t = a.len();
    (0..t)
        .map(|j| {
            let lo = j.saturating_sub(window);
            let hi = (j + window).min(t - 1);
            b[lo..=hi]
                .iter()
                .map(|&y| (a[j] - y).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Windowed inverse-Euclidean distance between two equal-length segments.
///
/// Each bin of one segment is matched with the closest value of the other
/// segment within `±window` bins; the mean of those per-bin gaps is taken in
/// both directions and averaged so the result is symmetric. A zero window
/// is the mean absolute difference.
pub fn wied_distance(a: &[f64], b: &[f64], window: usize) -> Result<f64> {
    check_len(a, b)?;
    let t = a.len() as f64;
    Ok((directed_window_sum(a, b, window) + directed_window_sum(b, a, window)) / (2.0 * t))
}

/// Maps a distance to a similarity in (0, 1].
pub fn to_similarity(dist: f64) -> Result<f64> {
    if dist.is_nan() || dist < 0.0 {
        return Err(Error::Domain(format!("distance must be non-negative, got {dist}")));
    }
    Ok(1.0 / (1.0 + dist))
}

/// Distance kernel used to build a similarity matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Wied { window: usize },
    Euclidean,
    Manhattan,
    Minkowski { p: f64 },
}

impl Kernel {
    /// Length-normalized distance between two segments.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len(a, b)?;
        let t = a.len() as f64;
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        Ok(match *self {
            Kernel::Wied { window } => return wied_distance(a, b, window),
            Kernel::Euclidean => (diffs.map(|d| d * d).sum::<f64>() / t).sqrt(),
            Kernel::Manhattan => diffs.sum::<f64>() / t,
            Kernel::Minkowski { p } => {
                if p.is_nan() || p < 1.0 {
                    return Err(Error::Config(format!("Minkowski order must be >= 1, got {p}")));
                }
                (diffs.map(|d| d.powf(p)).sum::<f64>() / t).powf(1.0 / p)
            }
        })
    }

    pub fn similarity(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        to_similarity(self.distance(a, b)?)
    }
}

/// Symmetric pairwise similarity with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.ids, &self.values, out)
    }
}

/// Square CSV with a header row of ids.
pub fn write_matrix_csv<W: Write>(ids: &[String], m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(ids)?;
    for i in 0..m.nrows() {
        wtr.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("<matrix>", e))?;
    Ok(())
}

/// Pairwise similarity of equal-length profiles under `kernel`.
pub fn similarity_matrix(ids: &[String], profiles: &[&[f64]], kernel: Kernel) -> Result<SimilarityMatrix> {
    if profiles.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 profiles, got {}",
            profiles.len()
        )));
    }
    if ids.len() != profiles.len() {
        return Err(Error::Dimension { expected: profiles.len(), actual: ids.len() });
    }
    let t = profiles[0].len();
    if let Some(bad) = profiles.iter().find(|p| p.len() != t) {
        return Err(Error::Dimension { expected: t, actual: bad.len() });
    }
    let n = profiles.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let sims = pairs
        .par_iter()
        .map(|&(i, j)| kernel.similarity(profiles[i], profiles[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut values = DMatrix::zeros(n, n);
    for (&(i, j), s) in pairs.iter().zip(sims) {
        values[(i, j)] = s;
        values[(j, i)] = s;
    }
    Ok(SimilarityMatrix { ids: ids.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wied_identity_and_examples() {
        let a = [0.3, 0.7, 0.1];
        assert_eq!(wied_distance(&a, &a, 2).unwrap(), 0.0);
        assert_eq!(wied_distance(&[0.0, 1.0], &[1.0, 0.0], 0).unwrap(), 1.0);
        assert_eq!(wied_distance(&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn wied_length_mismatch() {
        assert!(matches!(
            wied_distance(&[0.0, 1.0], &[0.0], 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn similarity_mapping() {
        assert_eq!(to_similarity(0.0).unwrap(), 1.0);
        assert_eq!(to_similarity(1.0).unwrap(), 0.5);
        assert!((to_similarity(0.25).unwrap() - 0.8).abs() < 1e-15);
        assert!(to_similarity(-0.1).is_err());
    }

    #[test]
    fn default_session_lengths() {
        let profile: Vec<f64> = (0..288).map(|b| b as f64).collect();
        let lens: Vec<usize> = SessionSpec::defaults()
            .iter()
            .map(|s| session_slice(&profile, s).len())
            .collect();
        assert_eq!(lens, vec![60, 36, 48, 72]);
        let covered: Vec<f64> = SessionSpec::defaults()
            .iter()
            .flat_map(|s| session_slice(&profile, s).to_vec())
            .collect();
        // 06:00 is bin 72; nothing before it, everything after it exactly once
        assert_eq!(covered, (72..288).map(|b| b as f64).collect::<Vec<_>>());
        validate_sessions(&SessionSpec::defaults()).unwrap();
    }

    #[test]
    fn overlapping_sessions_rejected() {
        let mut s = SessionSpec::defaults();
        s[1].start = NaiveTime::from_hms_opt(10, 30, 0).unwrap();
        assert!(validate_sessions(&s).is_err());
    }

    #[test]
    fn matrix_layout() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p1 = [0.1, 0.2, 0.3];
        let p2 = [0.1, 0.2, 0.3];
        let p3 = [0.9, 0.0, 0.4];
        let m = similarity_matrix(&ids, &[&p1, &p2, &p3], Kernel::Euclidean).unwrap();
        assert_eq!(m.values.shape(), (3, 3));
        assert_eq!(m.values[(0, 1)], 1.0);
        for i in 0..3 {
            assert_eq!(m.values[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(m.values[(i, j)], m.values[(j, i)]);
            }
        }
        assert!(similarity_matrix(&ids[..2], &[&p1, &[0.0, 1.0]], Kernel::Manhattan).is_err());
    }

    #[test]
    fn baseline_kernels_hand_values() {
        let a = [0.0, 0.0, 0.0, 0.0];
        let b = [1.0, 0.0, 0.0, 0.0];
        assert!((Kernel::Euclidean.distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((Kernel::Manhattan.distance(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let m3 = Kernel::Minkowski { p: 3.0 }.distance(&a, &b).unwrap();
        assert!((m3 - 0.25f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn shared_night_inflates_full_day_similarity() {
        let mut a = vec![0.0; 288];
        let mut b = vec![0.0; 288];
        a[72..132].iter_mut().for_each(|v| *v = 0.8);
        b[132..168].iter_mut().for_each(|v| *v = 0.8);
        let full = Kernel::Euclidean.similarity(&a, &b).unwrap();
        let s = SessionSpec::defaults()[0];
        let session = Kernel::Euclidean
            .similarity(session_slice(&a, &s), session_slice(&b, &s))
            .unwrap();
        assert!(full > session);
    }

    fn pair(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        len.prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..=1.0, n),
                proptest::collection::vec(0.0f64..=1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn wied_monotone_in_window((a, b) in pair(1..40), w in 0usize..6) {
            let d0 = wied_distance(&a, &b, w).unwrap();
            let d1 = wied_distance(&a, &b, w + 1).unwrap();
            prop_assert!(d1 <= d0 + 1e-15);
        }

        #[test]
        fn kernels_symmetric((a, b) in pair(1..40), w in 0usize..4) {
            for k in [Kernel::Wied { window: w }, Kernel::Euclidean, Kernel::Manhattan, Kernel::Minkowski { p: 3.0 }] {
                prop_assert_eq!(k.distance(&a, &b).unwrap(), k.distance(&b, &a).unwrap());
                let s = k.similarity(&a, &b).unwrap();
                prop_assert!(s > 0.0 && s <= 1.0);
            }
        }

        #[test]
        fn appending_shared_silence_raises_similarity((a, b) in pair(4..30), pad in 1usize..30) {
            prop_assume!(a != b);
            let mut a2 = vec![0.0; pad];
            a2.extend(&a);
            let mut b2 = vec![0.0; pad];
            b2.extend(&b);
            for k in [Kernel::Wied { window: 0 }, Kernel::Euclidean, Kernel::Manhattan] {
                prop_assert!(k.similarity(&a2, &b2).unwrap() > k.similarity(&a, &b).unwrap());
            }
        }
    }
}
