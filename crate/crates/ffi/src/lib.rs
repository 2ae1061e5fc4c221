//! C ABI over the spaceprofiler library.
//!
//! Every fallible function returns an [`SpStatus`]. On failure the
//! diagnostic is kept per thread and can be read with [`sp_last_error`].
//! Handles are opaque and must be released with their matching `_free`
//! function. Panics never cross the boundary; they surface as
//! `SP_STATUS_PANIC`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use spaceprofiler::activeness::{categorize, classify_poi, Verdict};
use spaceprofiler::config::PipelineConfig;
use spaceprofiler::kmeans::KMeansParams;
use spaceprofiler::pipeline::{run_pipeline, PipelineRun};
use spaceprofiler::profiling::DayType;
use spaceprofiler::similarity::Kernel;
use spaceprofiler::spectral::{cluster_affinity, AffinityMatrix, SpectralFit, Weights};
use spaceprofiler::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Domain = 4,
    Dimension = 5,
    Alignment = 6,
    Config = 7,
    InsufficientData = 8,
    IsolatedNode = 9,
    Numeric = 10,
    Schema = 11,
    MissingArtifacts = 12,
    Io = 13,
    Panic = 14,
}

impl From<&Error> for SpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } | Error::DuplicateReading { .. } | Error::Csv(_) | Error::Json(_) => SpStatus::Parse,
            Error::Domain(_) => SpStatus::Domain,
            Error::Dimension { .. } => SpStatus::Dimension,
            Error::Alignment(_) => SpStatus::Alignment,
            Error::Config(_) => SpStatus::Config,
            Error::InsufficientData(_) => SpStatus::InsufficientData,
            Error::IsolatedNode(_) => SpStatus::IsolatedNode,
            Error::Numeric(_) => SpStatus::Numeric,
            Error::Schema(_) => SpStatus::Schema,
            Error::MissingArtifacts(_) => SpStatus::MissingArtifacts,
            Error::Io { .. } => SpStatus::Io,
        }
    }
}

/// Distance kernel selector for [`sp_similarity`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpKernel {
    /// `param` is the window in bins.
    Wied = 0,
    Euclidean = 1,
    Manhattan = 2,
    /// `param` is the order p.
    Minkowski = 3,
}

/// Generic day type selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpDayType {
    Weekday = 0,
    Weekend = 1,
    SchoolHoliday = 2,
}

impl From<SpDayType> for DayType {
    fn from(d: SpDayType) -> Self {
        match d {
            SpDayType::Weekday => DayType::Weekday,
            SpDayType::Weekend => DayType::Weekend,
            SpDayType::SchoolHoliday => DayType::SchoolHoliday,
        }
    }
}

/// Spectral clustering result for one affinity matrix.
pub struct SpClusterModel {
    fit: SpectralFit,
}

/// Outcome of a full pipeline run, with its report serialized as JSON.
pub struct SpReport {
    run: PipelineRun,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SpStatus, message: impl Into<String>) -> SpStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> SpStatus {
    let status = SpStatus::from(&e);
    fail(status, e.to_string())
}

/// Runs `f`, clearing the last error first and converting panics.
fn guarded(f: impl FnOnce() -> SpStatus) -> SpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            fail(SpStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, SpStatus> {
    if ptr.is_null() {
        return Err(fail(SpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(SpStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Windowed distance between two profiles of `len` bins.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_wied_distance(
    a: *const f64,
    b: *const f64,
    len: usize,
    window: usize,
    out: *mut f64,
) -> SpStatus {
    sp_similarity_impl(Kernel::Wied { window }, a, b, len, out, false)
}

/// Similarity `1 / (1 + d)` under the chosen kernel.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_similarity(
    kernel: SpKernel,
    param: f64,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> SpStatus {
    let k = match kernel {
        SpKernel::Wied => {
            if !(param >= 0.0 && param.fract() == 0.0) {
                return fail(SpStatus::InvalidArgument, format!("window must be a whole number, got {param}"));
            }
            Kernel::Wied { window: param as usize }
        }
        SpKernel::Euclidean => Kernel::Euclidean,
        SpKernel::Manhattan => Kernel::Manhattan,
        SpKernel::Minkowski => Kernel::Minkowski { p: param },
    };
    sp_similarity_impl(k, a, b, len, out, true)
}

unsafe fn sp_similarity_impl(
    kernel: Kernel,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
    similarity: bool,
) -> SpStatus {
    guarded(|| {
        let (Some(a), Some(b)) = (slice(a, len), slice(b, len)) else {
            return fail(SpStatus::NullPointer, "profile pointer is null");
        };
        if out.is_null() {
            return fail(SpStatus::NullPointer, "out is null");
        }
        let r = if similarity { kernel.similarity(a, b) } else { kernel.distance(a, b) };
        match r {
            Ok(v) => {
                *out = v;
                SpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Activeness category (1 most active, 5 least) of a cluster mean under
/// the default bounds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_categorize(mean: f64, out: *mut u8) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullPointer, "out is null");
        }
        if !(0.0..=1.0).contains(&mean) {
            return fail(SpStatus::Domain, format!("mean must lie in [0, 1], got {mean}"));
        }
        *out = categorize(mean);
        SpStatus::Ok
    })
}

/// Writes 1 to `active` when at least two of the categories are 3 or better.
///
/// # Safety
/// `active` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_classify(weekday: u8, weekend: u8, school_holiday: u8, active: *mut i32) -> SpStatus {
    guarded(|| {
        if active.is_null() {
            return fail(SpStatus::NullPointer, "active is null");
        }
        if ![weekday, weekend, school_holiday].iter().all(|c| (1..=5).contains(c)) {
            return fail(SpStatus::Domain, "categories must lie in 1..=5");
        }
        let cats: BTreeMap<DayType, u8> = [
            (DayType::Weekday, weekday),
            (DayType::Weekend, weekend),
            (DayType::SchoolHoliday, school_holiday),
        ]
        .into_iter()
        .collect();
        match classify_poi("ffi", &cats) {
            Ok(v) => {
                *active = i32::from(v.verdict == Verdict::Active);
                SpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Spectral clustering of a row-major `n × n` affinity matrix.
///
/// # Safety
/// `values` must point to `n * n` doubles; `out` must be writable. On
/// success `*out` owns a handle to release with [`sp_cluster_model_free`].
#[no_mangle]
pub unsafe extern "C" fn sp_cluster_affinity(
    values: *const f64,
    n: usize,
    k_min: usize,
    k_max: usize,
    seed: u64,
    out: *mut *mut SpClusterModel,
) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(len) = n.checked_mul(n) else {
            return fail(SpStatus::InvalidArgument, "matrix size overflows");
        };
        let Some(v) = slice(values, len) else {
            return fail(SpStatus::NullPointer, "values is null");
        };
        let m = DMatrix::from_row_slice(n, n, v);
        if m != m.transpose() {
            return fail(SpStatus::InvalidArgument, "affinity matrix must be symmetric");
        }
        let a = AffinityMatrix { ids: (0..n).map(|i| i.to_string()).collect(), values: m, weights: Weights::default() };
        let params = KMeansParams { seed, ..KMeansParams::default() };
        match cluster_affinity(&a, (k_min, k_max), &params) {
            Ok(fit) => {
                *out = Box::into_raw(Box::new(SpClusterModel { fit }));
                SpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Selected number of clusters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_cluster_model_k(model: *const SpClusterModel) -> usize {
    model.as_ref().map_or(0, |m| m.fit.k)
}

/// Copies up to `len` cluster indices (row order) into `out` and returns
/// the number of rows in the model.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` entries or be null.
#[no_mangle]
pub unsafe extern "C" fn sp_cluster_model_assignments(model: *const SpClusterModel, out: *mut usize, len: usize) -> usize {
    let Some(m) = model.as_ref() else { return 0 };
    if !out.is_null() {
        for (i, &a) in m.fit.assignments.iter().take(len).enumerate() {
            *out.add(i) = a;
        }
    }
    m.fit.assignments.len()
}

/// Copies up to `len` ascending eigenvalues into `out` and returns how many
/// the model holds.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` entries or be null.
#[no_mangle]
pub unsafe extern "C" fn sp_cluster_model_eigenvalues(model: *const SpClusterModel, out: *mut f64, len: usize) -> usize {
    let Some(m) = model.as_ref() else { return 0 };
    let ev = &m.fit.embedding.eigenvalues;
    if !out.is_null() {
        for (i, &v) in ev.iter().take(len).enumerate() {
            *out.add(i) = v;
        }
    }
    ev.len()
}

/// Releases a cluster model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_cluster_model_free(model: *mut SpClusterModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the pipeline described by a TOML config and writes the bundle to
/// `out_dir`.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable. On success
/// `*out` owns a handle to release with [`sp_report_free`].
#[no_mangle]
pub unsafe extern "C" fn sp_pipeline_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut SpReport,
) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let cfg_path = match path_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let dir = match path_arg(out_dir, "out_dir") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let result = PipelineConfig::load(&cfg_path).and_then(|cfg| run_pipeline(&cfg, &dir));
        let run = match result {
            Ok(run) => run,
            Err(e) => return from_error(e),
        };
        let json = match run.report.to_json() {
            Ok(j) => CString::new(j).expect("JSON has no NUL"),
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(SpReport { run, json }));
        SpStatus::Ok
    })
}

/// The report as JSON, owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_report_json(report: *const SpReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// Cluster count chosen for a day type, or 0 when unavailable.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_report_k(report: *const SpReport, day: SpDayType) -> usize {
    report
        .as_ref()
        .and_then(|r| r.run.report.day_types.get(&DayType::from(day)))
        .map_or(0, |d| d.k)
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_report_free(report: *mut SpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
