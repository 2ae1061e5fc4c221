//! Daily average windows per temporal label and their aggregation into
//! the three generic day types.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{NormalizedSeries, TemporalLabel, BINS_PER_DAY, BIN_MINUTES};

/// Generic day type used for clustering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Weekday,
    Weekend,
    SchoolHoliday,
}

impl DayType {
    pub const ALL: [DayType; 3] = [DayType::Weekday, DayType::Weekend, DayType::SchoolHoliday];

    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
            DayType::SchoolHoliday => "school_holiday",
        }
    }

    /// Per-date labels folded into this day type.
    pub fn members(self) -> &'static [TemporalLabel] {
        use TemporalLabel::*;
        match self {
            DayType::Weekday => &[Mon, Tue, Wed, Thu, Fri],
            DayType::Weekend => &[Sat, Sun],
            DayType::SchoolHoliday => &[SchoolHoliday],
        }
    }
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DayType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DayType::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown day type '{s}'")))
    }
}

/// Running per-bin sum and sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct BinAccumulator {
    pub sums: Vec<f64>,
    pub support: Vec<u32>,
}

impl Default for BinAccumulator {
    fn default() -> Self {
        BinAccumulator {
            sums: vec![0.0; BINS_PER_DAY],
            support: vec![0; BINS_PER_DAY],
        }
    }
}

impl BinAccumulator {
    pub fn add(&mut self, bin: usize, value: f64) {
        self.sums[bin] += value;
        self.support[bin] += 1;
    }

    pub fn merge(&mut self, other: &BinAccumulator) {
        for b in 0..BINS_PER_DAY {
            self.sums[b] += other.sums[b];
            self.support[b] += other.support[b];
        }
    }

    pub fn is_empty(&self) -> bool {
        self.support.iter().all(|&s| s == 0)
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.support)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect()
    }
}

/// Mean daily profiles of one sensor for each of the nine labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelProfiles {
    pub sensor_id: String,
    pub by_label: BTreeMap<TemporalLabel, BinAccumulator>,
}

impl LabelProfiles {
    pub fn mean(&self, label: TemporalLabel) -> Vec<Option<f64>> {
        self.by_label[&label].means()
    }
}

/// Index of the 5-minute bin a time of day falls in.
pub fn bin_of(time: chrono::NaiveTime) -> usize {
    ((time.hour() * 60 + time.minute()) / BIN_MINUTES) as usize
}

/// Averages readings at the same time of day across all dates sharing a
/// label. Dates without a label are ignored.
pub fn daily_windows(
    series: &NormalizedSeries,
    day_labels: &BTreeMap<NaiveDate, TemporalLabel>,
) -> LabelProfiles {
    let mut by_label: BTreeMap<TemporalLabel, BinAccumulator> = TemporalLabel::ALL
        .iter()
        .map(|&l| (l, BinAccumulator::default()))
        .collect();
    for (ts, &v) in series.timestamps.iter().zip(&series.values) {
        if let Some(label) = day_labels.get(&ts.date()) {
            by_label
                .get_mut(label)
                .expect("all labels present")
                .add(bin_of(ts.time()), v);
        }
    }
    LabelProfiles {
        sensor_id: series.sensor_id.clone(),
        by_label,
    }
}

/// A sensor's mean daily profile for one generic day type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayTypeProfile {
    pub sensor_id: String,
    pub label: DayType,
    /// `None` where no sample exists for the bin.
    pub bins: Vec<Option<f64>>,
    pub support: Vec<u32>,
}

impl DayTypeProfile {
    pub fn has_data(&self) -> bool {
        self.bins.iter().any(Option::is_some)
    }

    /// Bins with gaps closed by linear interpolation; edges copy the
    /// nearest defined bin.
    pub fn filled(&self) -> Result<Vec<f64>> {
        fill_gaps(&self.bins).ok_or_else(|| {
            Error::InsufficientData(format!(
                "sensor {} has no samples for {}",
                self.sensor_id, self.label
            ))
        })
    }
}

/// Linear interpolation across empty bins. Returns `None` when every bin is empty.
pub fn fill_gaps(bins: &[Option<f64>]) -> Option<Vec<f64>> {
    let defined: Vec<(usize, f64)> = bins
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.map(|v| (i, v)))
        .collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (defined.first()?, defined.last()?);
    let mut out = vec![0.0; bins.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if i <= first_i {
            first_v
        } else if i >= last_i {
            last_v
        } else {
            match bins[i] {
                Some(v) => v,
                None => {
                    let right = defined.partition_point(|&(j, _)| j < i);
                    let (li, lv) = defined[right - 1];
                    let (ri, rv) = defined[right];
                    lv + (rv - lv) * (i - li) as f64 / (ri - li) as f64
                }
            }
        };
    }
    Some(out)
}

/// Folds the nine label profiles into Weekday, Weekend and SchoolHoliday.
/// Aggregation weights each label by its per-bin sample count. Public
/// holidays are dropped.
pub fn generic_profiles(labels: &LabelProfiles) -> Result<[DayTypeProfile; 3]> {
    let build = |day: DayType| {
        let mut acc = BinAccumulator::default();
        for l in day.members() {
            acc.merge(&labels.by_label[l]);
        }
        acc
    };
    let weekday = build(DayType::Weekday);
    if weekday.is_empty() {
        return Err(Error::InsufficientData(format!(
            "sensor {} has no Monday-Friday samples",
            labels.sensor_id
        )));
    }
    let make = |day: DayType, acc: BinAccumulator| DayTypeProfile {
        sensor_id: labels.sensor_id.clone(),
        label: day,
        bins: acc.means(),
        support: acc.support,
    };
    Ok([
        make(DayType::Weekday, weekday),
        make(DayType::Weekend, build(DayType::Weekend)),
        make(DayType::SchoolHoliday, build(DayType::SchoolHoliday)),
    ])
}

/// Writes profiles as `sensor_id,label,b000..b287`; empty bins are blank cells.
pub fn write_profiles_csv<W: Write>(profiles: &[DayTypeProfile], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["sensor_id".to_string(), "label".to_string()];
    header.extend((0..BINS_PER_DAY).map(|b| format!("b{b:03}")));
    wtr.write_record(&header)?;
    for p in profiles {
        let mut row = vec![p.sensor_id.clone(), p.label.to_string()];
        row.extend(p.bins.iter().map(|b| b.map(|v| v.to_string()).unwrap_or_default()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

/// Reads the format produced by [`write_profiles_csv`]. Support is set to 1
/// for defined bins since the file does not carry counts.
pub fn read_profiles_csv<R: Read>(input: R) -> Result<Vec<DayTypeProfile>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != BINS_PER_DAY + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", BINS_PER_DAY + 2, rec.len()),
            });
        }
        let bins = rec
            .iter()
            .skip(2)
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid bin value '{c}'"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(DayTypeProfile {
            sensor_id: rec[0].to_string(),
            label: rec[1].parse()?,
            support: bins.iter().map(|b| b.is_some() as u32).collect(),
            bins,
        });
    }
    Ok(out)
}
