//! Activeness categories from cluster mean utilization, and the
//! active / less-active verdict per PoI.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiling::DayType;

/// Lower edges of categories 1–4; anything below the last edge is category 5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryBounds(pub [f64; 4]);

impl Default for CategoryBounds {
    fn default() -> Self {
        CategoryBounds([0.30, 0.20, 0.10, 0.03])
    }
}

impl CategoryBounds {
    pub fn validate(&self) -> Result<()> {
        let e = self.0;
        if !(e[0] > e[1] && e[1] > e[2] && e[2] > e[3] && e[3] > 0.0 && e[0] <= 1.0) {
            return Err(Error::Config(format!(
                "category edges must be strictly decreasing within (0, 1], got {e:?}"
            )));
        }
        Ok(())
    }

    /// Category ordinal 1 (most active) to 5. Each band includes its lower edge.
    pub fn categorize(&self, mean: f64) -> u8 {
        self.0
            .iter()
            .position(|&edge| mean >= edge)
            .map_or(5, |i| i as u8 + 1)
    }

    /// `(lower, upper)` of a category; `None` on an open side.
    pub fn band(&self, category: u8) -> (Option<f64>, Option<f64>) {
        let e = self.0;
        match category {
            1 => (Some(e[0]), None),
            5 => (None, Some(e[3])),
            c => (Some(e[c as usize - 1]), Some(e[c as usize - 2])),
        }
    }
}

/// Category under the default bounds.
pub fn categorize(mean: f64) -> u8 {
    CategoryBounds::default().categorize(mean)
}

/// Mean utilization per cluster: the average over member sensors of each
/// sensor's mean across all bins.
pub fn cluster_mean(assignments: &BTreeMap<String, usize>, profiles: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<usize, f64>> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (id, &c) in assignments {
        let p = profiles
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("no profile for assigned sensor {id}")))?;
        if p.is_empty() {
            warn!("sensor {id} has an empty profile; left out of cluster {c}");
            continue;
        }
        let e = acc.entry(c).or_insert((0.0, 0));
        e.0 += p.iter().sum::<f64>() / p.len() as f64;
        e.1 += 1;
    }
    if let Some(&max) = assignments.values().max() {
        for c in 0..=max {
            if !acc.contains_key(&c) {
                warn!("cluster {c} has no members; excluded");
            }
        }
    }
    Ok(acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Active,
    LessActive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiVerdict {
    pub sensor_id: String,
    pub categories: BTreeMap<DayType, u8>,
    pub verdict: Verdict,
}

/// Active when at least two of the three day types are category 3 or better.
pub fn classify_poi(sensor_id: &str, categories: &BTreeMap<DayType, u8>) -> Result<PoiVerdict> {
    let missing: Vec<&str> = DayType::ALL
        .iter()
        .filter(|d| !categories.contains_key(d))
        .map(|d| d.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InsufficientData(format!(
            "sensor {sensor_id} lacks categories for {}",
            missing.join(", ")
        )));
    }
    let qualifying = DayType::ALL.iter().filter(|d| categories[d] <= 3).count();
    Ok(PoiVerdict {
        sensor_id: sensor_id.to_string(),
        categories: categories.clone(),
        verdict: if qualifying >= 2 { Verdict::Active } else { Verdict::LessActive },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats(wd: u8, we: u8, sh: u8) -> BTreeMap<DayType, u8> {
        [(DayType::Weekday, wd), (DayType::Weekend, we), (DayType::SchoolHoliday, sh)]
            .into_iter()
            .collect()
    }

    #[test]
    fn reported_cluster_means() {
        let got: Vec<u8> = [0.3850, 0.2301, 0.1621, 0.0577, 0.0105].iter().map(|&m| categorize(m)).collect();
        assert_eq!(got, vec![1, 2, 3, 4, 5]);
        assert_eq!(categorize(0.30), 1);
        assert_eq!(categorize(1.0), 1);
        assert_eq!(categorize(0.0), 5);
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(classify_poi("a", &cats(3, 3, 5)).unwrap().verdict, Verdict::Active);
        assert_eq!(classify_poi("a", &cats(4, 4, 1)).unwrap().verdict, Verdict::LessActive);
        assert_eq!(classify_poi("a", &cats(1, 2, 3)).unwrap().verdict, Verdict::Active);
        let mut partial = cats(1, 1, 1);
        partial.remove(&DayType::Weekend);
        assert!(classify_poi("a", &partial).is_err());
    }

    #[test]
    fn cluster_means() {
        let assign: BTreeMap<String, usize> =
            [("a".to_string(), 0), ("b".into(), 1), ("c".into(), 1)].into_iter().collect();
        let profiles: BTreeMap<String, Vec<f64>> = [
            ("a".to_string(), vec![0.2; 288]),
            ("b".into(), vec![0.1; 288]),
            ("c".into(), vec![0.3; 288]),
        ]
        .into_iter()
        .collect();
        let means = cluster_mean(&assign, &profiles).unwrap();
        assert!((means[&0] - 0.2).abs() < 1e-12);
        assert!((means[&1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bands_are_reported() {
        let b = CategoryBounds::default();
        assert_eq!(b.band(1), (Some(0.30), None));
        assert_eq!(b.band(3), (Some(0.10), Some(0.20)));
        assert_eq!(b.band(5), (None, Some(0.03)));
        assert!(CategoryBounds([0.1, 0.2, 0.3, 0.4]).validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn categorize_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(categorize(hi) <= categorize(lo));
        }

        #[test]
        fn improving_never_demotes(wd in 1u8..=5, we in 1u8..=5, sh in 1u8..=5, which in 0usize..3) {
            let before = classify_poi("x", &cats(wd, we, sh)).unwrap().verdict;
            let mut c = [wd, we, sh];
            c[which] = c[which].saturating_sub(1).max(1);
            let after = classify_poi("x", &cats(c[0], c[1], c[2])).unwrap().verdict;
            if before == Verdict::Active {
                proptest::prop_assert_eq!(after, Verdict::Active);
            }
        }
    }
}
