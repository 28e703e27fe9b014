//! CSV tables and a JSON manifest mapping plot series to columns.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use super::flight::TrajectoryLog;
use super::montecarlo::{MetricsTable, PARAM_NAMES, SECOND_POSE_NAMES};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub enum Report<'a> {
    Metrics(&'a MetricsTable),
    Trajectory(&'a TrajectoryLog),
}

const AXES: [&str; 3] = ["x", "y", "z"];
const VEL_AXES: [&str; 3] = ["vx", "vy", "vz"];
const ANGLES: [&str; 3] = ["roll", "pitch", "yaw"];

fn num(v: f64) -> String {
    v.to_string()
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn write(&self, path: &Path) -> Result<(), ReportError> {
        let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
    }
}

fn metrics_table(t: &MetricsTable) -> Table {
    let mut header: Vec<String> = [
        "value",
        "trials",
        "converged",
        "not_converged",
        "failed",
        "accepted",
        "acceptance_rate",
        "sigma_l",
        "sigma_h",
        "pred_pos_std",
        "err_pos_std",
        "pred_ego_rot_std",
    ]
    .map(String::from)
    .to_vec();
    for n in PARAM_NAMES {
        header.extend([format!("err_mean_{n}"), format!("err_std_{n}"), format!("pred_std_{n}")]);
    }
    for n in SECOND_POSE_NAMES {
        header.extend([format!("err_std_{n}"), format!("pred_std_{n}")]);
    }
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.value),
                r.trials.to_string(),
                r.converged.to_string(),
                r.not_converged.to_string(),
                r.failed.to_string(),
                r.accepted.to_string(),
                num(r.acceptance_rate()),
                num(r.sigma_l),
                num(r.sigma_h),
                num(r.predicted_position_std()),
                num(r.position_error_std()),
                num(r.predicted_ego_rotation_std()),
            ];
            for k in 0..12 {
                row.extend([num(r.error_mean[k]), num(r.error_std[k]), num(r.predicted_std[k])]);
            }
            for k in 0..6 {
                row.extend([num(r.second_error_std[k]), num(r.predicted_second_std[k])]);
            }
            row
        })
        .collect();
    Table { header, rows }
}

fn trajectory_table(log: &TrajectoryLog) -> Table {
    let mut header = vec!["time".to_string()];
    for (prefix, names) in [("truth", AXES), ("truth", VEL_AXES), ("truth", ANGLES)] {
        header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    for prefix in ["raw_err", "nav_err", "nav_std"] {
        for names in [AXES, VEL_AXES, ANGLES] {
            header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
        }
    }
    let rows = log
        .samples
        .iter()
        .map(|s| {
            let truth_att = crate::camgeom::dcm_to_euler(&s.truth.rotation)
                .map(|e| e.to_vector())
                .unwrap_or_else(|_| crate::camgeom::Vec3::repeat(f64::NAN));
            let mut row = vec![num(s.time)];
            for v in [s.truth.position, s.truth.velocity, truth_att] {
                row.extend(v.iter().map(|x| num(*x)));
            }
            for errs in [s.raw_error(), s.nav_error()] {
                for v in errs {
                    row.extend(v.iter().map(|x| num(*x)));
                }
            }
            row.extend(s.nav_std.iter().map(|x| num(*x)));
            row
        })
        .collect();
    Table { header, rows }
}

/// Gate check names in order of first appearance.
fn check_names(log: &TrajectoryLog) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for c in log.fixes.iter().filter_map(|f| f.report.as_ref()).flat_map(|r| &r.checks) {
        if !names.contains(&c.name) {
            names.push(c.name.clone());
        }
    }
    names
}

fn fixes_table(log: &TrajectoryLog) -> Table {
    let names = check_names(log);
    let mut header: Vec<String> =
        ["index", "time", "status", "rolled_back", "accepted", "strikes", "disabled", "iterations"].map(String::from).to_vec();
    header.extend(SECOND_POSE_NAMES.iter().map(|n| format!("std_{n}")));
    header.extend(SECOND_POSE_NAMES.iter().map(|n| format!("vision_err_{n}")));
    for n in &names {
        header.extend([format!("{n}_lhs"), format!("{n}_rhs"), format!("{n}_pass")]);
    }
    header.push("message".into());
    let opt6 = |v: Option<[f64; 6]>| -> Vec<String> { v.map_or_else(|| vec![String::new(); 6], |a| a.map(num).to_vec()) };
    let rows = log
        .fixes
        .iter()
        .map(|f| {
            let r = f.report.as_ref();
            let mut row = vec![
                f.index.to_string(),
                num(f.time),
                f.status.name().to_string(),
                f.rolled_back.to_string(),
                r.map_or(String::new(), |r| r.accepted.to_string()),
                r.map_or(String::new(), |r| r.strike_count.to_string()),
                r.map_or(String::new(), |r| r.disabled.to_string()),
                f.iterations.map_or(String::new(), |i| i.to_string()),
            ];
            row.extend(opt6(f.sigma_c2_std));
            row.extend(opt6(f.vision_error));
            for n in &names {
                match r.and_then(|r| r.checks.iter().find(|c| &c.name == n)) {
                    Some(c) => row.extend([num(c.lhs), num(c.rhs), c.pass.to_string()]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            row.push(f.message.clone().unwrap_or_default());
            row
        })
        .collect();
    Table { header, rows }
}

fn series(name: &str, file: &str, x: &str, y: &str) -> Value {
    json!({ "name": name, "file": file, "x": x, "y": y })
}

fn metrics_manifest(t: &MetricsTable, file: &str, table: &Table) -> Value {
    let x = "value";
    let mut list = vec![
        series("predicted second-position std", file, x, "pred_pos_std"),
        series("empirical second-position std", file, x, "err_pos_std"),
        series("predicted ego-rotation std", file, x, "pred_ego_rot_std"),
        series("height error std", file, x, "sigma_h"),
        series("gate acceptance rate", file, x, "acceptance_rate"),
    ];
    for n in SECOND_POSE_NAMES.iter().chain(PARAM_NAMES.iter()) {
        list.push(series(&format!("predicted std {n}"), file, x, &format!("pred_std_{n}")));
        list.push(series(&format!("empirical std {n}"), file, x, &format!("err_std_{n}")));
    }
    json!({
        "kind": "sweep",
        "param": t.param.name(),
        "files": [{ "file": file, "columns": table.header }],
        "series": list,
    })
}

fn trajectory_manifest(traj: (&str, &Table), fixes: (&str, &Table)) -> Value {
    let mut list = Vec::new();
    for (names, label) in [(AXES, "position"), (VEL_AXES, "velocity"), (ANGLES, "attitude")] {
        for n in names {
            list.push(series(&format!("uncorrected {label} error {n}"), traj.0, "time", &format!("raw_err_{n}")));
            list.push(series(&format!("corrected {label} error {n}"), traj.0, "time", &format!("nav_err_{n}")));
            list.push(series(&format!("filter {label} std {n}"), traj.0, "time", &format!("nav_std_{n}")));
        }
    }
    for n in SECOND_POSE_NAMES {
        list.push(series(&format!("vision {n} error"), fixes.0, "time", &format!("vision_err_{n}")));
        list.push(series(&format!("vision {n} std"), fixes.0, "time", &format!("std_{n}")));
    }
    json!({
        "kind": "flight",
        "files": [
            { "file": traj.0, "columns": traj.1.header },
            { "file": fixes.0, "columns": fixes.1.header },
        ],
        "series": list,
    })
}

/// Writes the CSV files and `manifest.json` into `out_dir`, creating it if
/// needed; returns the paths written.
pub fn emit_report(report: Report<'_>, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let manifest = match report {
        Report::Metrics(t) => {
            let file = format!("sweep_{}.csv", t.param.name());
            let table = metrics_table(t);
            let path = out_dir.join(&file);
            table.write(&path)?;
            written.push(path);
            metrics_manifest(t, &file, &table)
        }
        Report::Trajectory(log) => {
            let traj = trajectory_table(log);
            let fixes = fixes_table(log);
            for (file, table) in [("trajectory.csv", &traj), ("fixes.csv", &fixes)] {
                let path = out_dir.join(file);
                table.write(&path)?;
                written.push(path);
            }
            trajectory_manifest(("trajectory.csv", &traj), ("fixes.csv", &fixes))
        }
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    written.push(path);
    Ok(written)
}
