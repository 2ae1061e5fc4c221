//! Static geographic features of each PoI and the active versus
//! less-active group comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::activeness::{PoiVerdict, Verdict};
use crate::error::{Error, Result};
use crate::ingest::{min_max, PoiType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Meters; nearer is better, inverted after normalization.
    Distance,
    Count,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub group: &'static str,
    pub kind: FeatureKind,
}

const fn dist(name: &'static str, group: &'static str) -> FeatureDef {
    FeatureDef { name, group, kind: FeatureKind::Distance }
}

const fn count(name: &'static str, group: &'static str) -> FeatureDef {
    FeatureDef { name, group, kind: FeatureKind::Count }
}

pub const FEATURE_COUNT: usize = 12;

/// Column schema of the static features CSV, after `sensor_id,poi_type`.
pub const FEATURES: [FeatureDef; FEATURE_COUNT] = [
    dist("bus_stop_1st_m", "transportation"),
    dist("bus_stop_2nd_m", "transportation"),
    dist("shop_1st_m", "commercial"),
    dist("shop_2nd_m", "commercial"),
    dist("food_1st_m", "commercial"),
    dist("food_2nd_m", "commercial"),
    dist("grocery_1st_m", "commercial"),
    dist("grocery_2nd_m", "commercial"),
    count("housing_blocks", "density"),
    count("housing_units", "density"),
    count("topology", "other"),
    count("connected_pathways", "other"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct StaticRow {
    pub sensor_id: String,
    pub poi_type: PoiType,
    pub values: [f64; FEATURE_COUNT],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StaticFeatureTable {
    /// Sorted by sensor id.
    pub rows: Vec<StaticRow>,
    /// Rows dropped for being incomplete or invalid, with the reason.
    pub rejected: Vec<(String, String)>,
}

impl StaticFeatureTable {
    pub fn get(&self, sensor_id: &str) -> Option<&StaticRow> {
        self.rows
            .binary_search_by(|r| r.sensor_id.as_str().cmp(sensor_id))
            .ok()
            .map(|i| &self.rows[i])
    }
}

pub fn static_header() -> Vec<&'static str> {
    let mut h = vec!["sensor_id", "poi_type"];
    h.extend(FEATURES.iter().map(|f| f.name));
    h
}

/// Loads the static features CSV and drops sensors listed in `excluded_ids`.
pub fn load_static<R: Read>(stream: R, excluded_ids: &[String]) -> Result<StaticFeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(stream);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = static_header().into_iter().filter(|n| col(n).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("static features missing column(s): {}", missing.join(", "))));
    }
    let id_col = col("sensor_id").unwrap();
    let type_col = col("poi_type").unwrap();
    let feature_cols: Vec<usize> = FEATURES.iter().map(|f| col(f.name).unwrap()).collect();
    let excluded: BTreeSet<&str> = excluded_ids.iter().map(String::as_str).collect();

    let mut table = StaticFeatureTable::default();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            warn!("static features line {line}: empty sensor_id; row rejected");
            table.rejected.push((format!("line {line}"), "empty sensor_id".into()));
            continue;
        }
        if excluded.contains(id.as_str()) {
            continue;
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Schema(format!("duplicate static row for sensor {id} (line {line})")));
        }
        match parse_row(&rec, &id, type_col, &feature_cols) {
            Ok(row) => table.rows.push(row),
            Err(reason) => {
                warn!("static features line {line}: {reason}; row rejected");
                table.rejected.push((id, reason));
            }
        }
    }
    table.rows.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
    Ok(table)
}

fn parse_row(rec: &csv::StringRecord, id: &str, type_col: usize, feature_cols: &[usize]) -> std::result::Result<StaticRow, String> {
    let poi_type: PoiType = rec
        .get(type_col)
        .filter(|s| !s.is_empty())
        .ok_or("missing poi_type")?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let mut values = [0.0; FEATURE_COUNT];
    for (i, (&c, def)) in feature_cols.iter().zip(FEATURES.iter()).enumerate() {
        let cell = rec.get(c).unwrap_or("");
        if cell.is_empty() {
            return Err(format!("missing {}", def.name));
        }
        let v: f64 = cell.parse().map_err(|_| format!("invalid {} '{cell}'", def.name))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("{} must be non-negative, got {cell}", def.name));
        }
        if def.kind == FeatureKind::Count && v.fract() != 0.0 {
            return Err(format!("{} must be a whole count, got {cell}", def.name));
        }
        values[i] = v;
    }
    Ok(StaticRow { sensor_id: id.to_string(), poi_type, values })
}

pub fn write_static_csv<W: Write>(rows: &[StaticRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(static_header())?;
    for r in rows {
        let mut rec = vec![r.sensor_id.clone(), r.poi_type.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<static>", e))?;
    Ok(())
}

/// Static table rescaled to [0, 1]; distance columns are inverted so that
/// 1.0 marks the nearest facility.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedStatic {
    pub rows: Vec<StaticRow>,
    pub degenerate_columns: Vec<&'static str>,
}

/// Per-column min-max over all retained sensors, then `1 - x` for distances.
pub fn normalize_static(table: &StaticFeatureTable) -> NormalizedStatic {
    let mut rows = table.rows.clone();
    let mut degenerate_columns = Vec::new();
    for (c, def) in FEATURES.iter().enumerate() {
        let column: Vec<f64> = table.rows.iter().map(|r| r.values[c]).collect();
        let (scaled, degenerate) = min_max(&column);
        if degenerate && !column.is_empty() {
            warn!("static feature {} is constant across sensors", def.name);
            degenerate_columns.push(def.name);
        }
        for (row, v) in rows.iter_mut().zip(scaled) {
            row.values[c] = match def.kind {
                FeatureKind::Distance => 1.0 - v,
                FeatureKind::Count => v,
            };
        }
    }
    NormalizedStatic { rows, degenerate_columns }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub feature: String,
    pub group: String,
    pub active_mean: f64,
    pub less_active_mean: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeComparison {
    pub poi_type: PoiType,
    pub n_active: usize,
    pub n_less_active: usize,
    pub features: Vec<FeatureComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmittedType {
    pub poi_type: PoiType,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub margin: f64,
    pub types: Vec<TypeComparison>,
    pub omitted: Vec<OmittedType>,
}

/// Compares mean normalized features of active and less-active PoIs per
/// PoI type. A feature is significant when the active mean exceeds the
/// less-active mean by more than `margin`.
pub fn group_compare(table: &NormalizedStatic, verdicts: &[PoiVerdict], margin: f64) -> Result<GroupComparison> {
    let by_id: BTreeMap<&str, Verdict> = verdicts.iter().map(|v| (v.sensor_id.as_str(), v.verdict)).collect();
    let mut groups: BTreeMap<PoiType, (Vec<&StaticRow>, Vec<&StaticRow>)> = BTreeMap::new();
    for row in &table.rows {
        let verdict = by_id
            .get(row.sensor_id.as_str())
            .ok_or_else(|| Error::Alignment(format!("no verdict for sensor {}", row.sensor_id)))?;
        let entry = groups.entry(row.poi_type).or_default();
        match verdict {
            Verdict::Active => entry.0.push(row),
            Verdict::LessActive => entry.1.push(row),
        }
    }
    for (active, less) in groups.values_mut() {
        active.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
        less.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
    }
    let mean = |rows: &[&StaticRow], c: usize| rows.iter().map(|r| r.values[c]).sum::<f64>() / rows.len() as f64;

    let mut types = Vec::new();
    let mut omitted = Vec::new();
    for poi_type in PoiType::ALL {
        let Some((active, less)) = groups.get(&poi_type) else {
            omitted.push(OmittedType { poi_type, reason: "no sensors of this type".into() });
            continue;
        };
        if active.is_empty() || less.is_empty() {
            let which = if active.is_empty() { "active" } else { "less-active" };
            omitted.push(OmittedType { poi_type, reason: format!("no {which} sensors") });
            continue;
        }
        let features = FEATURES
            .iter()
            .enumerate()
            .map(|(c, def)| {
                let active_mean = mean(active, c);
                let less_active_mean = mean(less, c);
                FeatureComparison {
                    feature: def.name.to_string(),
                    group: def.group.to_string(),
                    active_mean,
                    less_active_mean,
                    significant: active_mean > less_active_mean + margin,
                }
            })
            .collect();
        types.push(TypeComparison {
            poi_type,
            n_active: active.len(),
            n_less_active: less.len(),
            features,
        });
    }
    Ok(GroupComparison { margin, types, omitted })
}
