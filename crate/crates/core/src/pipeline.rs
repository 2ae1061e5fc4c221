//! End-to-end batch run: ingest, profile, cluster each day type, grade
//! activeness and compare static features, then write the report bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activeness::{classify_poi, cluster_mean, CategoryBounds, Verdict};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::{filter_validity, label_days, normalize_counts, parse_readings, Calendar, PoiType, SensorSeries};
use crate::kmeans::KMeansParams;
use crate::profiling::{daily_windows, generic_profiles, write_profiles_csv, DayType, DayTypeProfile};
use crate::similarity::{write_matrix_csv, SessionSpec};
use crate::spectral::{cluster_pipeline, ClusterModel, Weights};
use crate::staticfeat::{group_compare, load_static, normalize_static, GroupComparison, StaticFeatureTable};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const STATUS_FILE: &str = "status.json";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const AUDIT_DIR: &str = "audit";

/// Analysis parameters echoed into the report. Input paths are left out so
/// that identical data read from different locations reports identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub min_valid_fraction: f64,
    pub window_bins: usize,
    pub sessions: [SessionSpec; 4],
    pub weights: Weights,
    pub k_range: (usize, usize),
    pub kmeans: KMeansParams,
    pub category_bounds: CategoryBounds,
    pub significance_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSummary {
    pub total: usize,
    pub valid: usize,
    /// Below the coverage threshold.
    pub excluded: Vec<String>,
    /// Valid but without any Monday to Friday samples.
    pub unprofiled: Vec<String>,
    /// Static rows dropped as incomplete, with the reason.
    pub static_rejected: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub mean: f64,
    pub category: u8,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayTypeReport {
    pub k: usize,
    pub db_scores: BTreeMap<usize, f64>,
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<ClusterSummary>,
    /// Sensors with no samples on this day type.
    pub unclustered: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub sensor_id: String,
    pub poi_type: Option<PoiType>,
    pub categories: BTreeMap<DayType, u8>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub parameters: ReportParameters,
    pub sensors: SensorSummary,
    pub day_types: BTreeMap<DayType, DayTypeReport>,
    pub verdicts: Vec<VerdictRow>,
    pub static_comparison: GroupComparison,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Report> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let report: Report = serde_json::from_reader(BufReader::new(f))?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Everything computed by a run, before anything is written.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: Report,
    pub profiles: Vec<DayTypeProfile>,
    pub models: BTreeMap<DayType, ClusterModel>,
    pub static_table: StaticFeatureTable,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Loads the configured inputs and runs every stage in memory.
pub fn execute(config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    // fail fast on missing inputs before the expensive stages
    for p in [&config.input.readings, &config.input.static_features] {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found")));
        }
    }
    let calendar = match &config.input.calendar {
        Some(p) => Calendar::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Calendar::default(),
    };
    let series = parse_readings(open(&config.input.readings)?)?;
    let static_table = load_static(open(&config.input.static_features)?, &[])?;
    analyze(series, static_table, &calendar, config)
}

/// Runs every stage on data already in memory. Static rows of sensors that
/// fail the coverage filter are dropped before normalization.
pub fn analyze(
    mut series: Vec<SensorSeries>,
    mut static_table: StaticFeatureTable,
    calendar: &Calendar,
    config: &PipelineConfig,
) -> Result<PipelineRun> {
    config.validate()?;
    if series.is_empty() {
        return Err(Error::InsufficientData("readings hold no sensors".into()));
    }
    if let Some(span) = calendar.span {
        for s in &mut series {
            s.expected_span = span;
        }
    }
    let span = series[0].expected_span;
    let total = series.len();
    let validity = filter_validity(series, config.min_valid_fraction)?;
    info!("{} of {total} sensors pass the coverage filter", validity.valid.len());
    if validity.valid.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no sensor reaches the minimum coverage of {}",
            config.min_valid_fraction
        )));
    }
    static_table.rows.retain(|r| validity.excluded_ids.binary_search(&r.sensor_id).is_err());

    let days = label_days(calendar, span);
    let mut profiles = Vec::new();
    let mut unprofiled = Vec::new();
    for s in &validity.valid {
        match generic_profiles(&daily_windows(&normalize_counts(s), &days)) {
            Ok(p) => profiles.extend(p),
            Err(e) => {
                warn!("{e}; sensor skipped");
                unprofiled.push(s.sensor_id.clone());
            }
        }
    }

    let cluster_config = config.cluster_config();
    let per_day: Vec<(DayType, Vec<DayTypeProfile>, Vec<String>)> = DayType::ALL
        .iter()
        .map(|&d| {
            let (with, without): (Vec<_>, Vec<_>) =
                profiles.iter().filter(|p| p.label == d).cloned().partition(|p| p.has_data());
            (d, with, without.into_iter().map(|p| p.sensor_id).collect())
        })
        .collect();
    // day types are independent; run them side by side
    let results: Vec<Result<ClusterModel>> = std::thread::scope(|scope| {
        let handles: Vec<_> = per_day
            .iter()
            .map(|(_, p, _)| scope.spawn(|| cluster_pipeline(p, &cluster_config)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("clustering thread panicked")).collect()
    });

    let bounds = config.category_bounds;
    let mut models = BTreeMap::new();
    let mut day_reports = BTreeMap::new();
    let mut sensor_categories: BTreeMap<String, BTreeMap<DayType, u8>> = BTreeMap::new();
    for ((day, _, unclustered), result) in per_day.into_iter().zip(results) {
        let model = result?;
        let filled: BTreeMap<String, Vec<f64>> =
            model.ids.iter().cloned().zip(model.profiles.iter().cloned()).collect();
        let means = cluster_mean(&model.assignments, &filled)?;
        let clusters: Vec<ClusterSummary> = means
            .iter()
            .map(|(&c, &mean)| {
                let members: Vec<String> =
                    model.assignments.iter().filter(|(_, &a)| a == c).map(|(id, _)| id.clone()).collect();
                ClusterSummary { cluster: c, size: members.len(), mean, category: bounds.categorize(mean), members }
            })
            .collect();
        for cl in &clusters {
            for id in &cl.members {
                sensor_categories.entry(id.clone()).or_default().insert(day, cl.category);
            }
        }
        day_reports.insert(
            day,
            DayTypeReport {
                k: model.k,
                db_scores: model.db_scores.clone(),
                eigenvalues: model.eigenvalues.clone(),
                clusters,
                unclustered,
            },
        );
        models.insert(day, model);
    }

    let mut verdicts = Vec::new();
    for (id, cats) in &sensor_categories {
        if cats.len() < DayType::ALL.len() {
            warn!("sensor {id} lacks a category on some day type; no verdict");
            continue;
        }
        let v = classify_poi(id, cats)?;
        verdicts.push(VerdictRow {
            sensor_id: v.sensor_id,
            poi_type: static_table.get(id).map(|r| r.poi_type),
            categories: v.categories,
            verdict: v.verdict,
        });
    }

    let judged: BTreeSet<&str> = verdicts.iter().map(|v| v.sensor_id.as_str()).collect();
    let comparable = StaticFeatureTable {
        rows: static_table
            .rows
            .iter()
            .filter(|r| {
                let keep = judged.contains(r.sensor_id.as_str());
                if !keep {
                    warn!("static row {} has no verdict; left out of the comparison", r.sensor_id);
                }
                keep
            })
            .cloned()
            .collect(),
        rejected: Vec::new(),
    };
    let poi_verdicts: Vec<_> = verdicts
        .iter()
        .map(|v| crate::activeness::PoiVerdict {
            sensor_id: v.sensor_id.clone(),
            categories: v.categories.clone(),
            verdict: v.verdict,
        })
        .collect();
    let static_comparison = group_compare(&normalize_static(&comparable), &poi_verdicts, config.significance_margin)?;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        parameters: ReportParameters {
            min_valid_fraction: config.min_valid_fraction,
            window_bins: config.wied.window_bins,
            sessions: config.sessions,
            weights: config.weights,
            k_range: config.k_range,
            kmeans: config.kmeans,
            category_bounds: config.category_bounds,
            significance_margin: config.significance_margin,
        },
        sensors: SensorSummary {
            total,
            valid: validity.valid.len(),
            excluded: validity.excluded_ids,
            unprofiled,
            static_rejected: static_table.rejected.clone(),
        },
        day_types: day_reports,
        verdicts,
        static_comparison,
    };
    Ok(PipelineRun { report, profiles, models, static_table })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_column_csv<W: Write>(header: &[&str], rows: impl Iterator<Item = Vec<String>>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(&r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Names of the per-day-type audit files, in write order.
pub const AUDIT_FILES: [&str; 12] = [
    "similarity_full_day.csv",
    "similarity_f1.csv",
    "similarity_f2.csv",
    "similarity_f3.csv",
    "similarity_f4.csv",
    "affinity.csv",
    "degree.csv",
    "laplacian.csv",
    "eigenvalues.csv",
    "embedding.csv",
    "db_scores.json",
    "assignments.csv",
];

fn write_audit(model: &ClusterModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = &model.ids;
    let matrix = |name: &str, m: &DMatrix<f64>| write_matrix_csv(ids, m, create(&dir.join(name))?);
    matrix(AUDIT_FILES[0], &model.full_day.values)?;
    for (i, s) in model.sessions.iter().enumerate() {
        matrix(AUDIT_FILES[1 + i], &s.values)?;
    }
    matrix(AUDIT_FILES[5], &model.affinity.values)?;
    write_column_csv(
        &["sensor_id", "degree"],
        ids.iter().zip(model.degree.iter()).map(|(id, d)| vec![id.clone(), d.to_string()]),
        create(&dir.join(AUDIT_FILES[6]))?,
    )?;
    matrix(AUDIT_FILES[7], &model.laplacian)?;
    write_column_csv(
        &["index", "eigenvalue"],
        model.eigenvalues.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]),
        create(&dir.join(AUDIT_FILES[8]))?,
    )?;
    let header: Vec<String> =
        std::iter::once("sensor_id".to_string()).chain((0..model.embedding.ncols()).map(|c| format!("u{c}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_column_csv(
        &header,
        ids.iter().enumerate().map(|(i, id)| {
            std::iter::once(id.clone()).chain(model.embedding.row(i).iter().map(|x| x.to_string())).collect()
        }),
        create(&dir.join(AUDIT_FILES[9]))?,
    )?;
    write_text(&dir.join(AUDIT_FILES[10]), &(serde_json::to_string_pretty(&model.db_scores)? + "\n"))?;
    write_column_csv(
        &["sensor_id", "cluster"],
        model.assignments.iter().map(|(id, c)| vec![id.clone(), c.to_string()]),
        create(&dir.join(AUDIT_FILES[11]))?,
    )
}

fn write_verdicts_csv<W: Write>(rows: &[VerdictRow], out: W) -> Result<()> {
    write_column_csv(
        &["sensor_id", "poi_type", "cat_wd", "cat_we", "cat_sh", "verdict"],
        rows.iter().map(|v| {
            vec![
                v.sensor_id.clone(),
                v.poi_type.map(|p| p.to_string()).unwrap_or_default(),
                v.categories[&DayType::Weekday].to_string(),
                v.categories[&DayType::Weekend].to_string(),
                v.categories[&DayType::SchoolHoliday].to_string(),
                match v.verdict {
                    Verdict::Active => "active".into(),
                    Verdict::LessActive => "less_active".into(),
                },
            ]
        }),
        out,
    )
}

/// Writes report, profiles, verdicts and audit matrices into `out_dir`.
pub fn write_bundle(run: &PipelineRun, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_profiles_csv(&run.profiles, create(&out_dir.join(PROFILES_FILE))?)?;
    write_verdicts_csv(&run.report.verdicts, create(&out_dir.join(VERDICTS_FILE))?)?;
    for (day, model) in &run.models {
        write_audit(model, &out_dir.join(AUDIT_DIR).join(day.as_str()))?;
    }
    write_text(&out_dir.join(REPORT_FILE), &run.report.to_json()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Status {
    /// `running`, `complete` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn write_status(out_dir: &Path, status: &str, error: Option<String>) -> Result<()> {
    let s = Status { status: status.into(), error };
    write_text(&out_dir.join(STATUS_FILE), &(serde_json::to_string_pretty(&s)? + "\n"))
}

/// Full run with plots. `status.json` reads `complete` only when every
/// artifact was written; a failed run leaves `failed` with the diagnostic.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineRun> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_status(out_dir, "running", None)?;
    let outcome = execute(config).and_then(|run| {
        write_bundle(&run, out_dir)?;
        crate::plots::emit_plots(out_dir)?;
        Ok(run)
    });
    match outcome {
        Ok(run) => {
            write_status(out_dir, "complete", None)?;
            Ok(run)
        }
        Err(e) => {
            if let Err(status_err) = write_status(out_dir, "failed", Some(e.to_string())) {
                warn!("could not record failure status: {status_err}");
            }
            Err(e)
        }
    }
}

/// Output directory precedence: explicit argument, then the config file.
pub fn resolve_out_dir(explicit: Option<PathBuf>, config: &PipelineConfig) -> Result<PathBuf> {
    explicit
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory given".into()))
}
