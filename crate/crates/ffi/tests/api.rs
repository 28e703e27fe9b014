use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dtm_nav_ffi::*;

const SMALL: &str = "trials = 4\nfeatures = 40\n\n[flight]\nduration = 30.0\nimu_rate = 50.0\nfix_interval = 10.0\n";

fn last_error() -> String {
    let p = dtm_nav_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small() -> *mut DtmNavConfig {
    let text = CString::new(SMALL).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_parse(text.as_ptr(), &mut cfg) }, DtmNavStatus::Ok);
    cfg
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small();
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_to_toml(cfg, &mut text) }, DtmNavStatus::Ok);
    let toml = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(toml.contains("trials = 4"));
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_parse(text, &mut again) }, DtmNavStatus::Ok);
    unsafe {
        dtm_nav_string_free(text);
        dtm_nav_config_free(again);
        dtm_nav_config_free(cfg);
    }
}

#[test]
fn invalid_config_sets_last_error() {
    let text = CString::new("[camera]\nresolution = 1\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_parse(text.as_ptr(), &mut cfg) }, DtmNavStatus::InvalidConfig);
    assert!(cfg.is_null());
    assert!(last_error().contains("resolution"));
}

#[test]
fn missing_file_is_an_io_error() {
    let path = CString::new("/nonexistent/dtm-nav.toml").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_load(path.as_ptr(), &mut cfg) }, DtmNavStatus::Io);
    assert!(last_error().contains("/nonexistent"));
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { dtm_nav_config_default(ptr::null_mut()) }, DtmNavStatus::NullPointer);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_flight(ptr::null(), &mut out) }, DtmNavStatus::NullPointer);
    assert!(last_error().contains("cfg"));
    assert_eq!(unsafe { dtm_nav_metrics_len(ptr::null()) }, 0);
    unsafe {
        dtm_nav_config_free(ptr::null_mut());
        dtm_nav_metrics_free(ptr::null_mut());
        dtm_nav_flight_free(ptr::null_mut());
        dtm_nav_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_config_default(ptr::null_mut()) }, DtmNavStatus::NullPointer);
    assert_eq!(unsafe { dtm_nav_config_default(&mut cfg) }, DtmNavStatus::Ok);
    assert!(dtm_nav_last_error().is_null());
    unsafe { dtm_nav_config_free(cfg) };
}

#[test]
fn sweep_rows_and_report() {
    let cfg = small();
    let param = CString::new("relief").unwrap();
    let values = [100.0, 200.0, 300.0];
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_sweep(cfg, param.as_ptr(), values.as_ptr(), values.len(), &mut m) }, DtmNavStatus::Ok);
    assert_eq!(unsafe { dtm_nav_metrics_len(m) }, 3);
    let mut row = DtmNavMetricsRow::default();
    assert_eq!(unsafe { dtm_nav_metrics_row(m, 2, &mut row) }, DtmNavStatus::Ok);
    assert_eq!(row.value, 300.0);
    assert_eq!(row.trials, 4);
    assert!(row.predicted_position_std > 0.0);
    assert_eq!(unsafe { dtm_nav_metrics_row(m, 3, &mut row) }, DtmNavStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dtm_nav_metrics_write(m, out.as_ptr()) }, DtmNavStatus::Ok);
    assert!(dir.path().join("sweep_relief.csv").exists());
    unsafe {
        dtm_nav_metrics_free(m);
        dtm_nav_config_free(cfg);
    }
}

#[test]
fn unknown_sweep_parameter_is_invalid() {
    let cfg = small();
    let param = CString::new("altitude").unwrap();
    let mut m = ptr::null_mut();
    let v = [1.0];
    assert_eq!(unsafe { dtm_nav_sweep(cfg, param.as_ptr(), v.as_ptr(), 1, &mut m) }, DtmNavStatus::InvalidArgument);
    assert!(last_error().contains("altitude"));
    unsafe { dtm_nav_config_free(cfg) };
}

#[test]
fn flight_samples_and_fixes() {
    let cfg = small();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { dtm_nav_flight(cfg, &mut f) }, DtmNavStatus::Ok);
    assert_eq!(unsafe { dtm_nav_flight_sample_count(f) }, 1501);
    assert_eq!(unsafe { dtm_nav_flight_fix_count(f) }, 3);
    let mut s = DtmNavSample::default();
    assert_eq!(unsafe { dtm_nav_flight_sample(f, 500, &mut s) }, DtmNavStatus::Ok);
    assert_eq!(s.time, 10.0);
    assert!(s.nav_std.iter().all(|v| *v > 0.0));
    let mut fix = std::mem::MaybeUninit::<DtmNavFix>::uninit();
    assert_eq!(unsafe { dtm_nav_flight_fix(f, 0, fix.as_mut_ptr()) }, DtmNavStatus::Ok);
    let fix = unsafe { fix.assume_init() };
    assert_eq!(fix.time, 10.0);
    if fix.status == DtmNavFixStatus::Applied {
        assert!(fix.second_pose_std.iter().all(|v| v.is_finite()));
    }
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dtm_nav_flight_write(f, out.as_ptr()) }, DtmNavStatus::Ok);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("fixes.csv").exists());
    unsafe {
        dtm_nav_flight_free(f);
        dtm_nav_config_free(cfg);
    }
}

#[test]
fn selftest_reports_counts() {
    let (mut passed, mut total) = (0usize, 0usize);
    assert_eq!(unsafe { dtm_nav_selftest(&mut passed, &mut total) }, DtmNavStatus::Ok);
    assert!(total > 0);
    assert_eq!(passed, total);
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(dtm_nav_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_profile_dir().join("libdtm_nav_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
