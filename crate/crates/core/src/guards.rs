//! Acceptance gates for a vision fix and the three-strikes shutdown rule.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::camgeom::{euler_to_dcm, FeatureObservation, ParamVector, Vec3};
use crate::estimator::Mat12;
use crate::insekf::{Mat15, Mat6, ATT, POS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub threshold_pct: f64,
    pub threshold_rcond: f64,
    pub threshold_dist: f64,
    pub threshold_angle: f64,
    pub threshold_dist12: f64,
    pub threshold_angle12: f64,
    /// Image-plane std for the outlier test; the feature noise `sigma_l`
    /// when unset.
    pub sigma_f: Option<f64>,
    /// Characteristic horizontal scale of relief changes (m).
    pub l_ground_dist: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            threshold_pct: 0.1,
            threshold_rcond: 1e-16,
            threshold_dist: 40.0,
            threshold_angle: 40.0,
            threshold_dist12: 0.1,
            threshold_angle12: 0.1,
            sigma_f: None,
            l_ground_dist: 500.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let named = [
            ("threshold_pct", self.threshold_pct),
            ("threshold_rcond", self.threshold_rcond),
            ("threshold_dist", self.threshold_dist),
            ("threshold_angle", self.threshold_angle),
            ("threshold_dist12", self.threshold_dist12),
            ("threshold_angle12", self.threshold_angle12),
            ("l_ground_dist", self.l_ground_dist),
            ("sigma_f", self.sigma_f.unwrap_or(1.0)),
        ];
        match named.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            Some((name, v)) => Err(format!("gates.{name} must be positive, got {v}")),
            None => Ok(()),
        }
    }
}

/// One evaluated inequality between `lhs` and `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, pass: lhs < rhs }
    }

    pub fn at_least(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, pass: lhs >= rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GateReport {
    pub checks: Vec<Check>,
    pub accepted: bool,
    pub strike_count: u32,
    pub disabled: bool,
}

impl GateReport {
    pub fn new(checks: Vec<Check>) -> Self {
        let accepted = checks.iter().all(|c| c.pass);
        Self { checks, accepted, strike_count: 0, disabled: false }
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];
const ANGLES: [&str; 3] = ["roll", "pitch", "yaw"];

/// Image distance between each observed `q2` and the reprojection of its
/// ground point through `params`.
pub fn reprojection_errors(params: &ParamVector, observations: &[FeatureObservation]) -> Vec<f64> {
    let r1 = euler_to_dcm(params.attitude());
    let r12 = euler_to_dcm(params.ego_rotation());
    let m = r12 * r1.transpose();
    let (p1, p12) = (params.position(), params.translation());
    observations
        .iter()
        .map(|o| {
            let c2 = m * (o.ground.position - p1) + p12;
            if c2.z <= 0.0 {
                return f64::INFINITY;
            }
            let q2 = o.q2 / o.q2.z;
            ((c2.x / c2.z - q2.x).powi(2) + (c2.y / c2.z - q2.y).powi(2)).sqrt()
        })
        .collect()
}

pub fn count_outliers(params: &ParamVector, observations: &[FeatureObservation], sigma_f: f64) -> usize {
    reprojection_errors(params, observations).into_iter().filter(|&d| !(d <= 3.0 * sigma_f)).count()
}

pub fn check_outlier_gate(n_initial: usize, n_final: usize, n: usize, cfg: &GateConfig) -> Vec<Check> {
    vec![
        Check::at_least("outliers_not_added", n_initial as f64, n_final as f64),
        Check::below("outlier_fraction", n_final as f64 / n.max(1) as f64, cfg.threshold_pct),
    ]
}

/// Reciprocal condition number of `J^T W J`, from the singular values of
/// `sqrt(W) J` to avoid squaring roundoff into the estimate.
pub fn normal_rcond(j_theta: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let mut a = j_theta.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= weights.get(i / 3).copied().unwrap_or(0.0).max(0.0).sqrt();
    }
    let under_determined = a.nrows() < a.ncols();
    let sv = a.svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    // an under-determined Jacobian has fewer singular values than columns
    let min = if under_determined { 0.0 } else { sv.min() };
    (min / max).powi(2)
}

pub fn check_conditioning(j_theta: &DMatrix<f64>, weights: &[f64], cfg: &GateConfig) -> Check {
    let rcond = normal_rcond(j_theta, weights);
    Check { name: "rcond".into(), lhs: rcond, rhs: cfg.threshold_rcond, pass: rcond > cfg.threshold_rcond }
}

/// Inputs shared by the degeneracy and initial-state gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixGeometry {
    pub sigma_l: f64,
    /// Camera height above the terrain (m).
    pub height: f64,
    pub p12: Vec3,
}

pub fn check_degeneracy(sigma_c2: &Mat6, sigma_theta: &Mat12, geo: &FixGeometry, cfg: &GateConfig) -> Vec<Check> {
    let h = geo.height;
    let pixel = 3.0 * geo.sigma_l;
    let baseline = geo.p12.norm();
    let mut out = Vec::with_capacity(18);
    for (k, axis) in AXES.iter().enumerate() {
        let s = sigma_c2[(k, k)].max(0.0).sqrt();
        out.push(Check::below(format!("pos_std_{axis}"), s / (pixel * h), cfg.threshold_dist));
        out.push(Check::below(format!("pos_3std_{axis}"), 3.0 * s, cfg.l_ground_dist));
    }
    for (k, angle) in ANGLES.iter().enumerate() {
        let s = sigma_c2[(3 + k, 3 + k)].max(0.0).sqrt();
        out.push(Check::below(format!("att_std_{angle}"), s / pixel, cfg.threshold_angle));
        out.push(Check::below(format!("att_3std_{angle}"), 3.0 * s, cfg.l_ground_dist / h));
    }
    for (k, axis) in AXES.iter().enumerate() {
        let s = sigma_theta[(ParamVector::P12 + k, ParamVector::P12 + k)].max(0.0).sqrt();
        out.push(Check::below(format!("ego_pos_std_{axis}"), ratio(s, baseline), cfg.threshold_dist12));
    }
    for (k, angle) in ANGLES.iter().enumerate() {
        let s = sigma_theta[(ParamVector::ATT12 + k, ParamVector::ATT12 + k)].max(0.0).sqrt();
        out.push(Check::below(format!("ego_att_std_{angle}"), ratio(s, baseline / h), cfg.threshold_angle12));
    }
    out
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `|a| mod 2 pi`, folded into `[0, pi]`.
pub fn wrap_angle_delta(d: f64) -> f64 {
    let m = d.abs().rem_euclid(2.0 * PI);
    m.min(2.0 * PI - m)
}

/// Per-axis jumps between the initial guess and the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixDeltas {
    pub p2: Vec3,
    pub att2: Vec3,
    pub p12: Vec3,
    pub att12: Vec3,
}

impl FixDeltas {
    /// From the initial and final second poses (position, Euler angles) and
    /// ego-motions.
    pub fn between(init_c2: (&Vec3, &Vec3), final_c2: (&Vec3, &Vec3), init: &ParamVector, fin: &ParamVector) -> Self {
        let wrap = |a: &Vec3, b: &Vec3| (a - b).map(wrap_angle_delta);
        Self {
            p2: (final_c2.0 - init_c2.0).abs(),
            att2: wrap(final_c2.1, init_c2.1),
            p12: (fin.translation() - init.translation()).abs(),
            att12: wrap(&fin.ego_rotation().to_vector(), &init.ego_rotation().to_vector()),
        }
    }
}

pub fn check_initial_state(p_minus: &Mat15, sigma_c2: &Mat6, deltas: &FixDeltas, geo: &FixGeometry, cfg: &GateConfig) -> Vec<Check> {
    let h = geo.height;
    let baseline = geo.p12.norm();
    let sp = |i: usize| p_minus[(i, i)].max(0.0).sqrt();
    let sc = |i: usize| sigma_c2[(i, i)].max(0.0).sqrt();
    let mut out = Vec::with_capacity(18);
    for (k, axis) in AXES.iter().enumerate() {
        out.push(Check::below(format!("prior_pos_3std_{axis}"), 3.0 * sp(POS + k), cfg.l_ground_dist));
    }
    for (k, angle) in ANGLES.iter().enumerate() {
        out.push(Check::below(format!("prior_att_3std_{angle}"), 3.0 * sp(ATT + k), cfg.l_ground_dist / h));
    }
    for (k, axis) in AXES.iter().enumerate() {
        out.push(Check::below(format!("jump_pos_{axis}"), deltas.p2[k], 3.0 * (sp(POS + k) + sc(k))));
    }
    for (k, angle) in ANGLES.iter().enumerate() {
        out.push(Check::below(format!("jump_att_{angle}"), deltas.att2[k], 3.0 * (sp(ATT + k) + sc(3 + k))));
    }
    for (k, axis) in AXES.iter().enumerate() {
        out.push(Check::below(format!("jump_ego_pos_{axis}"), ratio(deltas.p12[k], baseline), cfg.threshold_dist12));
    }
    for (k, angle) in ANGLES.iter().enumerate() {
        out.push(Check::below(format!("jump_ego_att_{angle}"), ratio(deltas.att12[k], baseline / h), cfg.threshold_angle12));
    }
    out
}

/// What the runner must do after a gate decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrikeAction {
    Apply,
    Suppress,
    /// Third consecutive failure: stop using vision and retract the last
    /// accepted fix.
    DisableAndRollBack,
    /// Vision already disabled; the fix is ignored.
    Ignore,
}

pub const MAX_STRIKES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StrikeCounter {
    strikes: u32,
    disabled: bool,
}

impl StrikeCounter {
    pub fn strikes(&self) -> u32 {
        self.strikes
    }

    pub fn disabled(&self) -> bool {
        self.disabled
    }

    /// Updates the counter from `report.accepted` and stamps the counter
    /// state into the report.
    pub fn update(&mut self, report: &mut GateReport) -> StrikeAction {
        let action = if self.disabled {
            report.accepted = false;
            StrikeAction::Ignore
        } else if report.accepted {
            self.strikes = 0;
            StrikeAction::Apply
        } else {
            self.strikes += 1;
            if self.strikes >= MAX_STRIKES {
                self.disabled = true;
                StrikeAction::DisableAndRollBack
            } else {
                StrikeAction::Suppress
            }
        };
        report.strike_count = self.strikes;
        report.disabled = self.disabled;
        action
    }
}
