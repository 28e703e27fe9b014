//! C interface to the dtm-nav scenarios.
//!
//! Every fallible function returns a [`DtmNavStatus`]. On failure the
//! calling thread's last-error message is set and can be read with
//! [`dtm_nav_last_error`]. Objects are opaque handles created by the library
//! and released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dtm_nav::camgeom::Vec3;
use dtm_nav::scenario::{
    emit_report, load_config, run_flight, run_monte_carlo, ConfigError, FixStatus, MetricsTable, Report, ReportError,
    ScenarioConfig, ScenarioError, SweepParam, TrajectoryLog,
};
use dtm_nav::selftest::run_selftest;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtmNavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Io = 4,
    Computation = 5,
    Panic = 6,
}

/// Scenario configuration.
pub struct DtmNavConfig(ScenarioConfig);

/// Result of a Monte-Carlo sweep.
pub struct DtmNavMetrics(MetricsTable);

/// Result of a closed-loop flight.
pub struct DtmNavFlight(TrajectoryLog);

/// Summary of one sweep value.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DtmNavMetricsRow {
    pub value: f64,
    pub trials: u64,
    pub converged: u64,
    pub not_converged: u64,
    pub failed: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub sigma_l: f64,
    pub sigma_h: f64,
    pub predicted_position_std: f64,
    pub position_error_std: f64,
    pub predicted_ego_rotation_std: f64,
}

/// One IMU tick. Errors are truth minus estimate: position (m), velocity
/// (m/s), attitude (rad).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DtmNavSample {
    pub time: f64,
    pub truth_position: [f64; 3],
    pub truth_velocity: [f64; 3],
    pub raw_error: [f64; 9],
    pub nav_error: [f64; 9],
    pub nav_std: [f64; 9],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtmNavFixStatus {
    Applied = 0,
    Rejected = 1,
    Skipped = 2,
    VisionDisabled = 3,
}

/// One vision fix. Arrays are NaN when the solver produced no pose.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtmNavFix {
    pub index: u64,
    pub time: f64,
    pub status: DtmNavFixStatus,
    pub rolled_back: bool,
    pub strikes: u32,
    pub disabled: bool,
    pub second_pose_std: [f64; 6],
    pub vision_error: [f64; 6],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Error(DtmNavStatus, String);

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => DtmNavStatus::Io,
            _ => DtmNavStatus::InvalidConfig,
        };
        Self(status, e.to_string())
    }
}

impl From<ScenarioError> for Error {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => c.into(),
            ScenarioError::UnknownSweep(_) | ScenarioError::BadSweepValue { .. } => {
                Self(DtmNavStatus::InvalidArgument, e.to_string())
            }
            _ => Self(DtmNavStatus::Computation, e.to_string()),
        }
    }
}

impl From<ReportError> for Error {
    fn from(e: ReportError) -> Self {
        Self(DtmNavStatus::Io, e.to_string())
    }
}

fn null(what: &str) -> Error {
    Error(DtmNavStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> DtmNavStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtmNavStatus::Ok,
        Ok(Err(Error(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DtmNavStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Error(DtmNavStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Error> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Error> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn dtm_nav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dtm_nav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_config_default(out: *mut *mut DtmNavConfig) -> DtmNavStatus {
    guard(|| put(out, DtmNavConfig(ScenarioConfig::default())))
}

/// Parses a scenario from TOML text; missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_config_parse(toml: *const c_char, out: *mut *mut DtmNavConfig) -> DtmNavStatus {
    guard(|| {
        let cfg = ScenarioConfig::from_toml(str_arg(toml, "toml")?)?;
        put(out, DtmNavConfig(cfg))
    })
}

/// Reads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_config_load(path: *const c_char, out: *mut *mut DtmNavConfig) -> DtmNavStatus {
    guard(|| {
        let cfg = load_config(Path::new(str_arg(path, "path")?))?;
        put(out, DtmNavConfig(cfg))
    })
}

/// Fully resolved configuration as TOML; release with [`dtm_nav_string_free`].
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_config_to_toml(cfg: *const DtmNavConfig, out: *mut *mut c_char) -> DtmNavStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(cfg.0.to_toml()).map_err(|e| Error(DtmNavStatus::Computation, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_config_free(cfg: *mut DtmNavConfig) {
    free(cfg);
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Monte-Carlo sweep of `param` over `count` values.
///
/// # Safety
/// `cfg` must be a live handle, `param` a NUL-terminated string, `values`
/// point to `count` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_sweep(
    cfg: *const DtmNavConfig,
    param: *const c_char,
    values: *const f64,
    count: usize,
    out: *mut *mut DtmNavMetrics,
) -> DtmNavStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let param: SweepParam = str_arg(param, "param")?.parse()?;
        if values.is_null() {
            return Err(null("values"));
        }
        let values = std::slice::from_raw_parts(values, count);
        let table = run_monte_carlo(&cfg.0, param, values)?;
        put(out, DtmNavMetrics(table))
    })
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_metrics_len(m: *const DtmNavMetrics) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows.len())
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_metrics_row(m: *const DtmNavMetrics, index: usize, out: *mut DtmNavMetricsRow) -> DtmNavStatus {
    guard(|| {
        let m = ref_arg(m, "metrics")?;
        let r = m.0.rows.get(index).ok_or_else(|| Error(DtmNavStatus::InvalidArgument, format!("row {index} out of range")))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DtmNavMetricsRow {
            value: r.value,
            trials: r.trials as u64,
            converged: r.converged as u64,
            not_converged: r.not_converged as u64,
            failed: r.failed as u64,
            accepted: r.accepted as u64,
            acceptance_rate: r.acceptance_rate(),
            sigma_l: r.sigma_l,
            sigma_h: r.sigma_h,
            predicted_position_std: r.predicted_position_std(),
            position_error_std: r.position_error_std(),
            predicted_ego_rotation_std: r.predicted_ego_rotation_std(),
        };
        Ok(())
    })
}

/// Writes the sweep CSV and manifest into `dir`.
///
/// # Safety
/// `m` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_metrics_write(m: *const DtmNavMetrics, dir: *const c_char) -> DtmNavStatus {
    guard(|| {
        let m = ref_arg(m, "metrics")?;
        emit_report(Report::Metrics(&m.0), Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_metrics_free(m: *mut DtmNavMetrics) {
    free(m);
}

/// Closed-loop flight.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight(cfg: *const DtmNavConfig, out: *mut *mut DtmNavFlight) -> DtmNavStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let log = run_flight(&cfg.0)?;
        put(out, DtmNavFlight(log))
    })
}

/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_sample_count(f: *const DtmNavFlight) -> usize {
    f.as_ref().map_or(0, |f| f.0.samples.len())
}

fn flatten(v: [Vec3; 3]) -> [f64; 9] {
    let mut a = [0.0; 9];
    for (k, e) in v.iter().enumerate() {
        a[3 * k..3 * k + 3].copy_from_slice(e.as_slice());
    }
    a
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_sample(f: *const DtmNavFlight, index: usize, out: *mut DtmNavSample) -> DtmNavStatus {
    guard(|| {
        let f = ref_arg(f, "flight")?;
        let s = f.0.samples.get(index).ok_or_else(|| Error(DtmNavStatus::InvalidArgument, format!("sample {index} out of range")))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DtmNavSample {
            time: s.time,
            truth_position: s.truth.position.into(),
            truth_velocity: s.truth.velocity.into(),
            raw_error: flatten(s.raw_error()),
            nav_error: flatten(s.nav_error()),
            nav_std: s.nav_std,
        };
        Ok(())
    })
}

/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_fix_count(f: *const DtmNavFlight) -> usize {
    f.as_ref().map_or(0, |f| f.0.fixes.len())
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_fix(f: *const DtmNavFlight, index: usize, out: *mut DtmNavFix) -> DtmNavStatus {
    guard(|| {
        let f = ref_arg(f, "flight")?;
        let r = f.0.fixes.get(index).ok_or_else(|| Error(DtmNavStatus::InvalidArgument, format!("fix {index} out of range")))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DtmNavFix {
            index: r.index as u64,
            time: r.time,
            status: match r.status {
                FixStatus::Applied => DtmNavFixStatus::Applied,
                FixStatus::Rejected => DtmNavFixStatus::Rejected,
                FixStatus::Skipped => DtmNavFixStatus::Skipped,
                FixStatus::VisionDisabled => DtmNavFixStatus::VisionDisabled,
            },
            rolled_back: r.rolled_back,
            strikes: r.report.as_ref().map_or(0, |g| g.strike_count),
            disabled: r.report.as_ref().is_some_and(|g| g.disabled),
            second_pose_std: r.sigma_c2_std.unwrap_or([f64::NAN; 6]),
            vision_error: r.vision_error.unwrap_or([f64::NAN; 6]),
        };
        Ok(())
    })
}

/// Writes the trajectory and fix CSVs and the manifest into `dir`.
///
/// # Safety
/// `f` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_write(f: *const DtmNavFlight, dir: *const c_char) -> DtmNavStatus {
    guard(|| {
        let f = ref_arg(f, "flight")?;
        emit_report(Report::Trajectory(&f.0), Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_flight_free(f: *mut DtmNavFlight) {
    free(f);
}

/// Runs the built-in checks. `passed` and `total` may be null.
///
/// # Safety
/// Non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtm_nav_selftest(passed: *mut usize, total: *mut usize) -> DtmNavStatus {
    guard(|| {
        let checks = run_selftest();
        let ok = checks.iter().filter(|c| c.pass).count();
        if let Some(p) = passed.as_mut() {
            *p = ok;
        }
        if let Some(t) = total.as_mut() {
            *t = checks.len();
        }
        match checks.iter().find(|c| !c.pass) {
            None => Ok(()),
            Some(c) => Err(Error(DtmNavStatus::Computation, c.to_string())),
        }
    })
}
