//! Synthetic count streams with planted activity archetypes.
//!
//! Each archetype owns a 288-bin base curve peaking at exactly 1 and a
//! multiplier per day type. A sensor draws every reading as the scaled curve
//! plus Gaussian noise, clamped symmetrically so the noise stays zero-mean
//! inside [0, 1]. Readings are dropped at random with the archetype's dropout
//! rate. Because every curve reaches 1 on weekdays and 0 overnight, min-max
//! normalization of a sensor recovers `count / max_count`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    label_days, write_readings, Calendar, DateSpan, PoiType, Reading, SensorSeries, TemporalLabel,
    BINS_PER_DAY, BIN_MINUTES,
};
use crate::profiling::DayType;
use crate::staticfeat::{write_static_csv, StaticRow, FEATURE_COUNT};

/// Shortest span that still covers every weekday several times.
pub const MIN_SPAN_DAYS: usize = 28;

/// Multiplier applied to the base curve on each kind of day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayMultipliers {
    pub weekday: f64,
    pub weekend: f64,
    pub school_holiday: f64,
    /// Public holidays are excluded from profiles but still generated.
    pub public_holiday: f64,
}

impl DayMultipliers {
    pub fn get(&self, day: DayType) -> f64 {
        match day {
            DayType::Weekday => self.weekday,
            DayType::Weekend => self.weekend,
            DayType::SchoolHoliday => self.school_holiday,
        }
    }

    fn for_label(&self, label: TemporalLabel) -> f64 {
        match label {
            TemporalLabel::Sat | TemporalLabel::Sun => self.weekend,
            TemporalLabel::SchoolHoliday => self.school_holiday,
            TemporalLabel::PublicHoliday => self.public_holiday,
            _ => self.weekday,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub name: String,
    pub base_curve: Vec<f64>,
    pub multipliers: DayMultipliers,
    pub noise_sd: f64,
    pub dropout_rate: f64,
}

impl ArchetypeSpec {
    /// Noise-free normalized profile for a day type.
    pub fn expected_profile(&self, day: DayType) -> Vec<f64> {
        let m = self.multipliers.get(day);
        self.base_curve.iter().map(|c| (c * m).clamp(0.0, 1.0)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.base_curve.len() != BINS_PER_DAY {
            return Err(Error::Dimension { expected: BINS_PER_DAY, actual: self.base_curve.len() });
        }
        if !self.base_curve.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("archetype {}: base curve must lie in [0, 1]", self.name)));
        }
        let m = self.multipliers;
        if ![m.weekday, m.weekend, m.school_holiday, m.public_holiday].iter().all(|x| *x >= 0.0 && x.is_finite()) {
            return Err(Error::Config(format!("archetype {}: multipliers must be non-negative", self.name)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!("archetype {}: noise_sd must be non-negative", self.name)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("archetype {}: dropout_rate must lie in [0, 1)", self.name)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub archetypes: Vec<ArchetypeSpec>,
    /// Sensor count per archetype, same order as `archetypes`.
    pub sensors_per_archetype: Vec<usize>,
    pub span: DateSpan,
    pub calendar: Calendar,
    pub seed: u64,
    /// Count that a normalized value of 1 maps to.
    pub max_count: u32,
}

/// Planted cluster of one sensor per day type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub sensor_id: String,
    pub archetype: String,
    pub labels: BTreeMap<DayType, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub series: Vec<SensorSeries>,
    pub static_rows: Vec<StaticRow>,
    pub truth: Vec<TruthRow>,
}

pub const READINGS_FILE: &str = "readings.csv";
pub const STATIC_FILE: &str = "static.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CALENDAR_FILE: &str = "calendar.toml";

impl SynthOutput {
    /// Truth labels in sensor order for one day type.
    pub fn truth_labels(&self, day: DayType) -> Vec<usize> {
        self.truth.iter().map(|t| t.labels[&day]).collect()
    }

    pub fn write_truth_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["sensor_id", "archetype", "truth_weekday", "truth_weekend", "truth_school_holiday"])?;
        for t in &self.truth {
            wtr.write_record([
                t.sensor_id.clone(),
                t.archetype.clone(),
                t.labels[&DayType::Weekday].to_string(),
                t.labels[&DayType::Weekend].to_string(),
                t.labels[&DayType::SchoolHoliday].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<truth>", e))?;
        Ok(())
    }

    /// Writes readings, static features, truth and the calendar into `dir`.
    pub fn write_to(&self, dir: &Path, calendar: &Calendar) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| Error::io(&path, e))
        };
        write_readings(&self.series, create(READINGS_FILE)?)?;
        write_static_csv(&self.static_rows, create(STATIC_FILE)?)?;
        self.write_truth_csv(create(TRUTH_FILE)?)?;
        let path = dir.join(CALENDAR_FILE);
        std::fs::write(&path, calendar.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Groups archetypes whose noise-free profiles coincide for `day`, numbering
/// groups by first appearance.
fn truth_groups(archetypes: &[ArchetypeSpec], day: DayType) -> Vec<usize> {
    let mut seen: Vec<Vec<f64>> = Vec::new();
    archetypes
        .iter()
        .map(|a| {
            let p = a.expected_profile(day);
            match seen.iter().position(|q| *q == p) {
                Some(i) => i,
                None => {
                    seen.push(p);
                    seen.len() - 1
                }
            }
        })
        .collect()
}

/// Mean of the weekday curve, used to condition static features.
fn activity(a: &ArchetypeSpec) -> f64 {
    a.expected_profile(DayType::Weekday).iter().sum::<f64>() / BINS_PER_DAY as f64
}

fn static_values(rng: &mut ChaCha8Rng, relative_activity: f64) -> [f64; FEATURE_COUNT] {
    let a = relative_activity;
    let mut v = [0.0; FEATURE_COUNT];
    let mut pair = |i: usize, first: f64, rng: &mut ChaCha8Rng| {
        let first = first.max(10.0).round();
        v[i] = first;
        v[i + 1] = (first + rng.random_range(20.0..250.0)).round();
    };
    // transport access is unrelated to activity
    let bus = rng.random_range(40.0..400.0);
    pair(0, bus, rng);
    let shop = 650.0 - 500.0 * a + rng.random_range(-60.0..60.0);
    pair(2, shop, rng);
    let food = 550.0 - 420.0 * a + rng.random_range(-60.0..60.0);
    pair(4, food, rng);
    let grocery = 700.0 - 520.0 * a + rng.random_range(-60.0..60.0);
    pair(6, grocery, rng);
    let blocks = (2.0 + 10.0 * a + rng.random_range(0.0..2.0)).round();
    v[8] = blocks;
    v[9] = (blocks * rng.random_range(80.0..140.0)).round();
    v[10] = rng.random_range(1..=6) as f64;
    v[11] = (1.0 + 5.0 * a + rng.random_range(0.0..1.5)).round();
    v
}

/// Generates readings, static features and planted labels.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput> {
    if config.span.days() < MIN_SPAN_DAYS {
        return Err(Error::Config(format!(
            "synthetic span of {} days is shorter than {MIN_SPAN_DAYS}",
            config.span.days()
        )));
    }
    if config.archetypes.is_empty() || config.archetypes.len() != config.sensors_per_archetype.len() {
        return Err(Error::Config(format!(
            "{} archetypes but {} sensor counts",
            config.archetypes.len(),
            config.sensors_per_archetype.len()
        )));
    }
    if config.max_count == 0 {
        return Err(Error::Config("max_count must be positive".into()));
    }
    for a in &config.archetypes {
        a.validate()?;
    }

    let days = label_days(&config.calendar, config.span);
    let groups: BTreeMap<DayType, Vec<usize>> =
        DayType::ALL.iter().map(|&d| (d, truth_groups(&config.archetypes, d))).collect();
    let max_activity = config.archetypes.iter().map(activity).fold(0.0, f64::max);

    let total: usize = config.sensors_per_archetype.iter().sum();
    let width = total.to_string().len().max(2);
    let mut out = SynthOutput { series: Vec::new(), static_rows: Vec::new(), truth: Vec::new() };
    let mut index = 0usize;
    for (ai, (arch, &count)) in config.archetypes.iter().zip(&config.sensors_per_archetype).enumerate() {
        let noise = Normal::new(0.0, arch.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
        for _ in 0..count {
            index += 1;
            let sensor_id = format!("s{index:0width$}");
            // one independent stream per sensor keeps sensors reproducible in isolation
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);

            let mut readings = Vec::new();
            for (&date, &label) in &days {
                let m = arch.multipliers.for_label(label);
                for (b, &base) in arch.base_curve.iter().enumerate() {
                    let drop = rng.random::<f64>() < arch.dropout_rate;
                    let c = (base * m).clamp(0.0, 1.0);
                    let bound = c.min(1.0 - c);
                    let v = c + noise.sample(&mut rng).clamp(-bound, bound);
                    if drop {
                        continue;
                    }
                    readings.push(Reading {
                        timestamp: bin_timestamp(date, b),
                        count: (v * config.max_count as f64).round() as u32,
                    });
                }
            }
            let poi_type = PoiType::ALL[(index - 1) % PoiType::ALL.len()];
            out.series.push(SensorSeries {
                sensor_id: sensor_id.clone(),
                poi_type: Some(poi_type),
                readings,
                expected_span: config.span,
            });
            let rel = if max_activity > 0.0 { activity(arch) / max_activity } else { 0.0 };
            out.static_rows.push(StaticRow {
                sensor_id: sensor_id.clone(),
                poi_type,
                values: static_values(&mut rng, rel),
            });
            out.truth.push(TruthRow {
                sensor_id,
                archetype: arch.name.clone(),
                labels: groups.iter().map(|(&d, g)| (d, g[ai])).collect(),
            });
        }
    }
    Ok(out)
}

fn bin_timestamp(date: NaiveDate, bin: usize) -> chrono::NaiveDateTime {
    date.and_hms_opt(0, 0, 0).expect("midnight exists") + Duration::minutes((bin as u32 * BIN_MINUTES) as i64)
}

fn hours() -> impl Iterator<Item = f64> {
    (0..BINS_PER_DAY).map(|b| b as f64 / 12.0)
}

/// Level `level` between `start` and `end` hours with linear ramps of `ramp` hours.
fn plateau(start: f64, end: f64, level: f64, ramp: f64) -> Vec<f64> {
    hours()
        .map(|h| level * ((h - start) / ramp).clamp(0.0, 1.0).min(((end - h) / ramp).clamp(0.0, 1.0)))
        .collect()
}

/// Triangular peak of `height` at `center` hours with half-width `width`.
fn peak(center: f64, width: f64, height: f64) -> Vec<f64> {
    hours().map(|h| height * (1.0 - (h - center).abs() / width).clamp(0.0, 1.0)).collect()
}

fn envelope(parts: &[Vec<f64>]) -> Vec<f64> {
    (0..BINS_PER_DAY)
        .map(|b| parts.iter().map(|p| p[b]).fold(0.0, f64::max).clamp(0.0, 1.0))
        .collect()
}

/// Five archetypes spanning the activity categories from most to least
/// active. The two quietest are empty on weekends, so the weekend has one
/// planted cluster fewer than the other day types.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    let mk = |name: &str, curve: Vec<f64>, weekend: f64, school_holiday: f64| ArchetypeSpec {
        name: name.to_string(),
        base_curve: curve,
        multipliers: DayMultipliers { weekday: 1.0, weekend, school_holiday, public_holiday: weekend },
        noise_sd: 0.05,
        dropout_rate: 0.05,
    };
    vec![
        mk(
            "bustling",
            envelope(&[plateau(6.5, 22.5, 0.60, 1.5), peak(19.0, 2.0, 1.0), peak(8.0, 1.0, 0.85)]),
            0.9,
            1.0,
        ),
        mk(
            "evening_hub",
            envelope(&[plateau(7.0, 21.0, 0.32, 1.0), peak(17.5, 2.5, 1.0), peak(10.0, 1.5, 0.6)]),
            0.6,
            0.95,
        ),
        mk(
            "after_school",
            envelope(&[plateau(7.0, 20.0, 0.19, 1.0), peak(16.5, 2.0, 1.0), peak(9.0, 1.0, 0.5)]),
            0.5,
            0.7,
        ),
        mk(
            "dusk_only",
            envelope(&[plateau(15.5, 19.5, 0.13, 0.5), peak(17.5, 1.2, 1.0)]),
            0.0,
            1.0,
        ),
        mk("near_idle", envelope(&[peak(20.0, 0.25, 1.0)]), 0.0, 1.0),
    ]
}

/// 47 sensors over the May to December 2017 study period.
pub fn default_config(seed: u64) -> SynthConfig {
    let calendar = Calendar::singapore_2017();
    SynthConfig {
        archetypes: default_archetypes(),
        sensors_per_archetype: vec![10, 9, 10, 9, 9],
        span: calendar.span.expect("built-in calendar has a span"),
        calendar,
        seed,
        max_count: 100,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_validity, normalize_counts};
    use crate::profiling::{daily_windows, generic_profiles};

    fn short_config(archetypes: Vec<ArchetypeSpec>, counts: Vec<usize>, seed: u64) -> SynthConfig {
        let d = |m, day| NaiveDate::from_ymd_opt(2017, m, day).unwrap();
        let calendar = Calendar {
            span: None,
            public_holidays: vec![d(7, 14)],
            school_holidays: vec![DateSpan { start: d(7, 17), end: d(7, 23) }],
        };
        SynthConfig {
            archetypes,
            sensors_per_archetype: counts,
            span: DateSpan::new(d(7, 1), d(8, 11)).unwrap(),
            calendar,
            seed,
            max_count: 100,
        }
    }

    fn quiet(mut a: ArchetypeSpec) -> ArchetypeSpec {
        a.noise_sd = 0.0;
        a.dropout_rate = 0.0;
        a
    }

    #[test]
    fn noiseless_sensor_recovers_its_curve() {
        let arch = quiet(default_archetypes().remove(1));
        let cfg = short_config(vec![arch.clone()], vec![1], 3);
        let out = synth_generate(&cfg).unwrap();
        let days = label_days(&cfg.calendar, cfg.span);
        let profiles = generic_profiles(&daily_windows(&normalize_counts(&out.series[0]), &days)).unwrap();
        for p in &profiles {
            let expect = arch.expected_profile(p.label);
            for (got, want) in p.filled().unwrap().iter().zip(&expect) {
                // only integer rounding separates the two
                assert!((got - want).abs() <= 0.5 / 100.0 + 1e-12, "{} {got} {want}", p.label);
            }
        }
    }

    #[test]
    fn heavy_dropout_fails_validity() {
        let mut arch = default_archetypes().remove(0);
        arch.dropout_rate = 0.95;
        let cfg = short_config(vec![default_archetypes().remove(0), arch], vec![1, 1], 5);
        let out = synth_generate(&cfg).unwrap();
        let outcome = filter_validity(out.series, 0.10).unwrap();
        assert_eq!(outcome.excluded_ids, vec!["s02".to_string()]);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = short_config(default_archetypes(), vec![1, 1, 1, 1, 1], 11);
        let a = synth_generate(&cfg).unwrap();
        assert_eq!(a, synth_generate(&cfg).unwrap());
        let other = SynthConfig { seed: 12, ..cfg };
        assert_ne!(a.series, synth_generate(&other).unwrap().series);
    }

    #[test]
    fn sample_mean_converges_to_curve() {
        let mut arch = default_archetypes().remove(0);
        arch.dropout_rate = 0.0;
        let cfg = short_config(vec![arch.clone()], vec![1], 21);
        let out = synth_generate(&cfg).unwrap();
        let days = label_days(&cfg.calendar, cfg.span);
        let weekday_dates = days
            .values()
            .filter(|l| DayType::Weekday.members().contains(l))
            .count() as f64;
        let profiles = generic_profiles(&daily_windows(&normalize_counts(&out.series[0]), &days)).unwrap();
        let got = profiles[0].filled().unwrap();
        let tol = 3.0 * arch.noise_sd / weekday_dates.sqrt() + 0.5 / 100.0;
        for (g, w) in got.iter().zip(arch.expected_profile(DayType::Weekday)) {
            assert!((g - w).abs() <= tol, "{g} vs {w} (tol {tol})");
        }
    }

    #[test]
    fn truth_groups_follow_multipliers() {
        let cfg = default_config(1);
        let out = synth_generate(&short_config(cfg.archetypes.clone(), vec![1; 5], 1)).unwrap();
        assert_eq!(out.truth_labels(DayType::Weekday), vec![0, 1, 2, 3, 4]);
        assert_eq!(out.truth_labels(DayType::Weekend), vec![0, 1, 2, 3, 3]);
        assert_eq!(out.truth_labels(DayType::SchoolHoliday), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn archetype_curves_peak_at_one() {
        for a in default_archetypes() {
            let max = a.base_curve.iter().copied().fold(0.0, f64::max);
            assert_eq!(max, 1.0, "{}", a.name);
            assert_eq!(a.base_curve[0], 0.0);
        }
    }

    #[test]
    fn short_span_rejected() {
        let mut cfg = short_config(default_archetypes(), vec![1; 5], 0);
        cfg.span.end = cfg.span.start + Duration::days(20);
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
    }
}
