//! Raw reading ingestion, validity filtering, calendar labelling and
//! per-sensor min-max normalization.
//!
//! Timestamps are interpreted in a single zone. Inputs carrying an explicit
//! offset are converted to UTC; naive inputs are taken as-is.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of 5-minute bins in a day.
pub const BINS_PER_DAY: usize = 288;
/// Width of one bin in minutes.
pub const BIN_MINUTES: u32 = 5;

/// Kind of instrumented public space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiType {
    Playground,
    PrecinctPavilion,
    MultiPurposeCourt,
    LinkWay,
    CommunityGarden,
}

impl PoiType {
    pub const ALL: [PoiType; 5] = [
        PoiType::Playground,
        PoiType::PrecinctPavilion,
        PoiType::MultiPurposeCourt,
        PoiType::LinkWay,
        PoiType::CommunityGarden,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoiType::Playground => "playground",
            PoiType::PrecinctPavilion => "precinct_pavilion",
            PoiType::MultiPurposeCourt => "multi_purpose_court",
            PoiType::LinkWay => "link_way",
            PoiType::CommunityGarden => "community_garden",
        }
    }
}

impl fmt::Display for PoiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoiType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoiType::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown PoI type '{s}'")))
    }
}

/// Inclusive calendar date interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateSpan {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("empty date span {start}..{end}")));
        }
        Ok(DateSpan { start, end })
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        let end = self.end;
        self.start.iter_days().take_while(move |d| *d <= end)
    }
}

/// One timestamped count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reading {
    pub timestamp: NaiveDateTime,
    pub count: u32,
}

/// A sensor's count stream, ordered by timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSeries {
    pub sensor_id: String,
    /// Not part of the readings file; attached from the static table.
    pub poi_type: Option<PoiType>,
    pub readings: Vec<Reading>,
    pub expected_span: DateSpan,
}

/// The nine per-date labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemporalLabel {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
    SchoolHoliday,
    PublicHoliday,
}

impl TemporalLabel {
    pub const ALL: [TemporalLabel; 9] = [
        TemporalLabel::Mon,
        TemporalLabel::Tue,
        TemporalLabel::Wed,
        TemporalLabel::Thu,
        TemporalLabel::Fri,
        TemporalLabel::Sat,
        TemporalLabel::Sun,
        TemporalLabel::SchoolHoliday,
        TemporalLabel::PublicHoliday,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_weekday(day: Weekday) -> Self {
        match day {
            Weekday::Mon => TemporalLabel::Mon,
            Weekday::Tue => TemporalLabel::Tue,
            Weekday::Wed => TemporalLabel::Wed,
            Weekday::Thu => TemporalLabel::Thu,
            Weekday::Fri => TemporalLabel::Fri,
            Weekday::Sat => TemporalLabel::Sat,
            Weekday::Sun => TemporalLabel::Sun,
        }
    }
}

/// Holiday calendar, typically loaded from a TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    /// Study period. When absent the extent of the readings is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<DateSpan>,
    #[serde(default)]
    pub public_holidays: Vec<NaiveDate>,
    #[serde(default)]
    pub school_holidays: Vec<DateSpan>,
}

impl Calendar {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cal: Calendar =
            toml::from_str(text).map_err(|e| Error::Config(format!("calendar: {e}")))?;
        for r in &cal.school_holidays {
            if r.end < r.start {
                return Err(Error::Config(format!(
                    "calendar: school holiday range {}..{} is reversed",
                    r.start, r.end
                )));
            }
        }
        Ok(cal)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calendar serializes")
    }

    /// School holiday ranges merged so that no two overlap or touch.
    pub fn merged_school_holidays(&self) -> Vec<DateSpan> {
        let mut ranges = self.school_holidays.clone();
        ranges.sort_by_key(|r| r.start);
        let mut merged: Vec<DateSpan> = Vec::with_capacity(ranges.len());
        for r in ranges {
            match merged.last_mut() {
                Some(last) if r.start <= last.end.succ_opt().unwrap_or(last.end) => {
                    last.end = last.end.max(r.end);
                }
                _ => merged.push(r),
            }
        }
        merged
    }

    /// Singapore 2017 calendar restricted to the May–December study period.
    pub fn singapore_2017() -> Self {
        let d = |m, day| NaiveDate::from_ymd_opt(2017, m, day).unwrap();
        Calendar {
            span: Some(DateSpan {
                start: d(5, 1),
                end: d(12, 30),
            }),
            public_holidays: vec![
                d(5, 1),
                d(5, 10),
                d(6, 26),
                d(8, 9),
                d(9, 1),
                d(10, 18),
                d(12, 25),
            ],
            school_holidays: vec![
                DateSpan {
                    start: d(5, 27),
                    end: d(6, 25),
                },
                DateSpan {
                    start: d(9, 2),
                    end: d(9, 10),
                },
                DateSpan {
                    start: d(11, 18),
                    end: d(12, 30),
                },
            ],
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub(crate) fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
}

pub(crate) fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses a `sensor_id,timestamp,count` CSV stream.
///
/// Rows are grouped per sensor and sorted by time. The expected span of
/// every series is the date extent of the whole stream; callers with an
/// explicit study period overwrite it.
pub fn parse_readings<R: Read>(stream: R) -> Result<Vec<SensorSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(stream);

    let headers = rdr.headers()?.clone();
    let expected = ["sensor_id", "timestamp", "count"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            1,
            format!("expected header 'sensor_id,timestamp,count', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut grouped: BTreeMap<String, Vec<(Reading, usize)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let sensor_id = &record[0];
        if sensor_id.is_empty() {
            return Err(parse_err(line, "empty sensor_id"));
        }
        let timestamp = parse_timestamp(&record[1])
            .ok_or_else(|| parse_err(line, format!("invalid timestamp '{}'", &record[1])))?;
        if timestamp.second() != 0 || timestamp.nanosecond() != 0 || timestamp.minute() % BIN_MINUTES != 0 {
            return Err(parse_err(
                line,
                format!("timestamp '{}' is not on a 5-minute boundary", &record[1]),
            ));
        }
        let count: i64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid count '{}'", &record[2])))?;
        if count < 0 {
            return Err(Error::Domain(format!(
                "negative count {count} for sensor {sensor_id} at line {line}"
            )));
        }
        let count = u32::try_from(count)
            .map_err(|_| Error::Domain(format!("count {count} out of range at line {line}")))?;
        grouped
            .entry(sensor_id.to_string())
            .or_default()
            .push((Reading { timestamp, count }, line));
    }

    let first = grouped.values().flatten().map(|(r, _)| r.timestamp.date()).min();
    let last = grouped.values().flatten().map(|(r, _)| r.timestamp.date()).max();
    let span = match (first, last) {
        (Some(s), Some(e)) => DateSpan { start: s, end: e },
        _ => return Ok(Vec::new()),
    };

    let mut out = Vec::with_capacity(grouped.len());
    for (sensor_id, mut rows) in grouped {
        rows.sort_by_key(|(r, _)| r.timestamp);
        for pair in rows.windows(2) {
            if pair[0].0.timestamp == pair[1].0.timestamp {
                let line = pair[0].1.max(pair[1].1);
                return Err(Error::DuplicateReading {
                    sensor_id,
                    timestamp: format_timestamp(pair[1].0.timestamp),
                    line,
                });
            }
        }
        out.push(SensorSeries {
            sensor_id,
            poi_type: None,
            readings: rows.into_iter().map(|(r, _)| r).collect(),
            expected_span: span,
        });
    }
    Ok(out)
}

/// Writes series in the readings CSV format, ordered by sensor then time.
pub fn write_readings<W: Write>(series: &[SensorSeries], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["sensor_id", "timestamp", "count"])?;
    let mut order: Vec<&SensorSeries> = series.iter().collect();
    order.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
    for s in order {
        for r in &s.readings {
            wtr.write_record([
                s.sensor_id.as_str(),
                &format_timestamp(r.timestamp),
                &r.count.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<readings>", e))?;
    Ok(())
}

/// Result of [`filter_validity`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidityOutcome {
    pub valid: Vec<SensorSeries>,
    /// Sorted lexicographically.
    pub excluded_ids: Vec<String>,
}

/// Fraction of expected 5-minute samples present within the expected span.
pub fn coverage(series: &SensorSeries) -> f64 {
    let expected = series.expected_span.days() * BINS_PER_DAY;
    let present = series
        .readings
        .iter()
        .filter(|r| series.expected_span.contains(r.timestamp.date()))
        .count();
    present as f64 / expected as f64
}

/// Keeps sensors whose coverage reaches `min_fraction`.
pub fn filter_validity(series_list: Vec<SensorSeries>, min_fraction: f64) -> Result<ValidityOutcome> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::Config(format!(
            "min_valid_fraction must lie in [0, 1], got {min_fraction}"
        )));
    }
    let mut valid = Vec::new();
    let mut excluded_ids = Vec::new();
    for s in series_list {
        if coverage(&s) >= min_fraction {
            valid.push(s);
        } else {
            excluded_ids.push(s.sensor_id);
        }
    }
    excluded_ids.sort();
    Ok(ValidityOutcome { valid, excluded_ids })
}

/// Labels every date in `span`. Public holidays win over school holidays,
/// which win over the weekday name.
pub fn label_days(calendar: &Calendar, span: DateSpan) -> BTreeMap<NaiveDate, TemporalLabel> {
    for h in &calendar.public_holidays {
        if !span.contains(*h) {
            warn!("public holiday {h} lies outside {}..{}; ignored", span.start, span.end);
        }
    }
    let school = calendar.merged_school_holidays();
    for r in &school {
        if r.end < span.start || r.start > span.end {
            warn!("school holiday {}..{} lies outside the span; ignored", r.start, r.end);
        }
    }
    span.dates()
        .map(|date| {
            let label = if calendar.public_holidays.contains(&date) {
                TemporalLabel::PublicHoliday
            } else if school.iter().any(|r| r.contains(date)) {
                TemporalLabel::SchoolHoliday
            } else {
                TemporalLabel::from_weekday(date.weekday())
            };
            (date, label)
        })
        .collect()
}

/// A series mapped onto [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSeries {
    pub sensor_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
    /// True when every count was equal and all values collapsed to 0.
    pub degenerate: bool,
}

/// Min-max scaling of a value list; a constant list maps to zeros.
pub fn min_max(values: &[f64]) -> (Vec<f64>, bool) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if values.is_empty() || range <= 0.0 {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - min) / range).collect(), false)
}

/// Min-max normalization over the sensor's full reading history.
pub fn normalize_counts(series: &SensorSeries) -> NormalizedSeries {
    let raw: Vec<f64> = series.readings.iter().map(|r| r.count as f64).collect();
    let (values, degenerate) = min_max(&raw);
    if degenerate {
        warn!(
            "sensor {} has a constant count series; normalized to 0",
            series.sensor_id
        );
    }
    NormalizedSeries {
        sensor_id: series.sensor_id.clone(),
        timestamps: series.readings.iter().map(|r| r.timestamp).collect(),
        values,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn series_with_counts(counts: &[u32]) -> SensorSeries {
        let start = date(2017, 5, 1).and_hms_opt(0, 0, 0).unwrap();
        SensorSeries {
            sensor_id: "s".into(),
            poi_type: None,
            readings: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| Reading {
                    timestamp: start + chrono::Duration::minutes(5 * i as i64),
                    count: c,
                })
                .collect(),
            expected_span: DateSpan::new(date(2017, 5, 1), date(2017, 5, 1)).unwrap(),
        }
    }

    #[test]
    fn groups_rows_by_sensor() {
        let csv = "sensor_id,timestamp,count\n\
                   s1,2017-05-01T00:05:00Z,3\n\
                   s2,2017-05-01T00:00:00Z,1\n\
                   s1,2017-05-01T00:00:00Z,4\n";
        let series = parse_readings(csv.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].sensor_id, "s1");
        assert_eq!(series[0].readings.len(), 2);
        assert_eq!(series[0].readings[0].count, 4);
        assert_eq!(series[1].readings.len(), 1);
    }

    #[test]
    fn header_only_is_empty() {
        let series = parse_readings("sensor_id,timestamp,count\n".as_bytes()).unwrap();
        assert!(series.is_empty());
    }

    #[test]
    fn negative_count_is_domain_error() {
        let csv = "sensor_id,timestamp,count\ns1,2017-05-01T00:00:00Z,-3\n";
        assert!(matches!(parse_readings(csv.as_bytes()), Err(Error::Domain(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "sensor_id,timestamp,count\ns1,2017-05-01T00:00:00Z,1\ns1,yesterday,2\n";
        match parse_readings(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let csv = "sensor_id,timestamp,count\ns1,2017-05-01T00:00:00Z,1\ns1,2017-05-01 00:00:00,2\n";
        assert!(matches!(
            parse_readings(csv.as_bytes()),
            Err(Error::DuplicateReading { line: 3, .. })
        ));
    }

    #[test]
    fn misaligned_timestamp_rejected() {
        let csv = "sensor_id,timestamp,count\ns1,2017-05-01T00:03:00Z,1\n";
        assert!(matches!(parse_readings(csv.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_parse() {
        let s = series_with_counts(&[1, 0, 7]);
        let mut buf = Vec::new();
        write_readings(std::slice::from_ref(&s), &mut buf).unwrap();
        let back = parse_readings(buf.as_slice()).unwrap();
        assert_eq!(back[0].readings, s.readings);
    }

    #[test]
    fn labels_follow_override_order() {
        let mut cal = Calendar::singapore_2017();
        cal.school_holidays.push(DateSpan::new(date(2017, 4, 28), date(2017, 5, 2)).unwrap());
        let span = DateSpan::new(date(2017, 5, 1), date(2017, 12, 30)).unwrap();
        let labels = label_days(&cal, span);
        assert_eq!(labels[&date(2017, 5, 1)], TemporalLabel::PublicHoliday);
        assert_eq!(labels[&date(2017, 6, 7)], TemporalLabel::SchoolHoliday);
        assert_eq!(labels[&date(2017, 11, 14)], TemporalLabel::Tue);
        assert_eq!(labels[&date(2017, 5, 2)], TemporalLabel::SchoolHoliday);
        assert_eq!(labels.len(), span.days());
    }

    #[test]
    fn holiday_outside_span_is_ignored() {
        let cal = Calendar {
            span: None,
            public_holidays: vec![date(2018, 1, 1)],
            school_holidays: vec![],
        };
        let span = DateSpan::new(date(2017, 12, 30), date(2017, 12, 31)).unwrap();
        let labels = label_days(&cal, span);
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[&date(2017, 12, 31)], TemporalLabel::Sun);
    }

    #[test]
    fn school_ranges_merge() {
        let cal = Calendar {
            span: None,
            public_holidays: vec![],
            school_holidays: vec![
                DateSpan::new(date(2017, 6, 5), date(2017, 6, 20)).unwrap(),
                DateSpan::new(date(2017, 6, 1), date(2017, 6, 10)).unwrap(),
                DateSpan::new(date(2017, 6, 21), date(2017, 6, 22)).unwrap(),
                DateSpan::new(date(2017, 9, 1), date(2017, 9, 2)).unwrap(),
            ],
        };
        let merged = cal.merged_school_holidays();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0], DateSpan::new(date(2017, 6, 1), date(2017, 6, 22)).unwrap());
    }

    #[test]
    fn calendar_toml_round_trip() {
        let cal = Calendar::singapore_2017();
        assert_eq!(Calendar::from_toml(&cal.to_toml()).unwrap(), cal);
    }

    #[test]
    fn normalize_endpoints() {
        let n = normalize_counts(&series_with_counts(&[0, 5, 10]));
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        assert!(!n.degenerate);
    }

    #[test]
    fn normalize_constant_is_degenerate() {
        let n = normalize_counts(&series_with_counts(&[7, 7, 7]));
        assert_eq!(n.values, vec![0.0, 0.0, 0.0]);
        assert!(n.degenerate);
    }

    #[test]
    fn normalize_uneven_spacing() {
        let n = normalize_counts(&series_with_counts(&[2, 4, 8]));
        assert_eq!(n.values[0], 0.0);
        assert!((n.values[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(n.values[2], 1.0);
    }

    #[test]
    fn validity_threshold_edges() {
        // 10 days => 2880 expected samples; 291 is 10.10%, 285 is 9.90%
        let span = DateSpan::new(date(2017, 5, 1), date(2017, 5, 10)).unwrap();
        let make = |id: &str, n: usize| {
            let mut s = series_with_counts(&vec![1; n]);
            s.sensor_id = id.into();
            s.expected_span = span;
            s
        };
        let out = filter_validity(vec![make("b", 291), make("a", 285)], 0.10).unwrap();
        assert_eq!(out.valid.len(), 1);
        assert_eq!(out.valid[0].sensor_id, "b");
        assert_eq!(out.excluded_ids, vec!["a".to_string()]);
        assert!(filter_validity(vec![], 0.1).unwrap().valid.is_empty());
        assert!(filter_validity(vec![], 1.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalize_bounded_and_order_preserving(counts in proptest::collection::vec(0u32..1000, 2..60)) {
            let n = normalize_counts(&series_with_counts(&counts));
            proptest::prop_assert!(n.values.iter().all(|v| (0.0..=1.0).contains(v)));
            for i in 0..counts.len() {
                for j in 0..counts.len() {
                    if counts[i] < counts[j] {
                        proptest::prop_assert!(n.values[i] < n.values[j]);
                    }
                }
            }
        }

        #[test]
        fn validity_filter_idempotent(lens in proptest::collection::vec(0usize..600, 0..8), frac in 0.0f64..0.5) {
            let span = DateSpan::new(date(2017, 5, 1), date(2017, 5, 2)).unwrap();
            let list: Vec<SensorSeries> = lens.iter().enumerate().map(|(i, &n)| {
                let mut s = series_with_counts(&vec![1; n]);
                s.sensor_id = format!("s{i}");
                s.expected_span = span;
                s
            }).collect();
            let once = filter_validity(list, frac).unwrap();
            let twice = filter_validity(once.valid.clone(), frac).unwrap();
            proptest::prop_assert_eq!(&twice.valid, &once.valid);
            proptest::prop_assert!(twice.excluded_ids.is_empty());
        }

        #[test]
        fn labels_partition_span(start in 0i64..3000, len in 1i64..400) {
            let s = date(2015, 1, 1) + chrono::Duration::days(start);
            let span = DateSpan::new(s, s + chrono::Duration::days(len - 1)).unwrap();
            let labels = label_days(&Calendar::singapore_2017(), span);
            proptest::prop_assert_eq!(labels.len(), len as usize);
            proptest::prop_assert!(span.dates().all(|d| labels.contains_key(&d)));
        }
    }
}
