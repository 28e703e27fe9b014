//! Single-fix Monte-Carlo trials and parameter sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{gate_fix, stream_rng, FixContext, ScenarioConfig, ScenarioError, World};
use crate::camgeom::{
    compose_second_pose, generate_observations, CameraPose, EgoMotion, EulerAngles, FlowVector, GeometryError, ParamVector, Vec3,
};
use crate::estimator::{solve_pose, EstimatorError, PoseSolution};
use crate::guards::{FixGeometry, GateReport};
use crate::insekf::{Mat15, ATT, POS};
use crate::uncertainty::{pose_and_second_frame, NoiseModel, PoseCovariance};

pub const PARAM_NAMES: [&str; 12] =
    ["p1_x", "p1_y", "p1_z", "roll1", "pitch1", "yaw1", "p12_x", "p12_y", "p12_z", "roll12", "pitch12", "yaw12"];
pub const SECOND_POSE_NAMES: [&str; 6] = ["p2_x", "p2_y", "p2_z", "roll2", "pitch2", "yaw2"];

const MAX_ATTITUDE_TILT: f64 = 10.0 * PI / 180.0;
const PLACEMENT_ATTEMPTS: usize = 20;

/// Inputs of one trial, reproducible from `(cfg, world, index)`.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub index: usize,
    pub truth: ParamVector,
    pub initial: ParamVector,
    pub flow: Vec<FlowVector>,
    pub ground_seed: u64,
    /// Seed for any further randomness a caller layers on this trial.
    pub extra_seed: u64,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Horizontal distance to keep between a trial camera and the map border.
fn viewing_margin(cfg: &ScenarioConfig, relief: f64) -> f64 {
    let reach = (0.5 * cfg.fov() + 2.0 * MAX_ATTITUDE_TILT).min(0.49 * PI).tan();
    (cfg.height + relief) * reach + cfg.ego.translation + cfg.perturbation.position
}

/// Draws the truth, the perturbed initial guess and the synthetic flow of
/// trial `index`. Stream `index` of the master seed drives the draw, so a
/// trial sees the same pose and features across sweep values.
pub fn draw_trial(cfg: &ScenarioConfig, world: &World, index: usize) -> Result<TrialSetup, ScenarioError> {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let [ox, oy] = world.map.origin();
    let [ex, ey] = world.map.extent();
    let margin = viewing_margin(cfg, world.truth.relief());
    if 2.0 * margin >= ex.min(ey) {
        return Err(ScenarioError::MapTooSmall { extent: [ex, ey], margin });
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let x = ox + rng.gen_range(margin..ex - margin);
        let y = oy + rng.gen_range(margin..ey - margin);
        let ground = world.truth.sample_height(x, y)?;
        let attitude = EulerAngles::new(
            PI + rng.gen_range(-MAX_ATTITUDE_TILT..MAX_ATTITUDE_TILT),
            rng.gen_range(-MAX_ATTITUDE_TILT..MAX_ATTITUDE_TILT),
            rng.gen_range(-PI..PI),
        );
        let pose = CameraPose::new(Vec3::new(x, y, ground + cfg.height), attitude);
        let translation = unit_vector(&mut rng) * cfg.ego.translation;
        let rotation = unit_vector(&mut rng) * cfg.ego.rotation_deg.to_radians();
        let ego = EgoMotion::new(translation, EulerAngles::from_vector(&rotation));
        let truth = ParamVector::from_parts(&pose, &ego);

        let p = &cfg.perturbation;
        let mut initial = truth;
        let mut jitter = |range: std::ops::Range<usize>, half: f64| {
            for k in range {
                if half > 0.0 {
                    initial.0[k] += rng.gen_range(-half..half);
                }
            }
        };
        jitter(ParamVector::P1..ParamVector::P1 + 3, p.position);
        jitter(ParamVector::ATT1..ParamVector::ATT1 + 3, p.attitude_deg.to_radians());
        jitter(ParamVector::P12..ParamVector::P12 + 3, p.ego_translation);
        jitter(ParamVector::ATT12..ParamVector::ATT12 + 3, p.ego_rotation_deg.to_radians());

        let flow_seed: u64 = rng.gen();
        let ground_seed: u64 = rng.gen();
        let extra_seed: u64 = rng.gen();
        let syn = match generate_observations(&pose, &ego, &world.truth, cfg.features, cfg.fov(), cfg.sigma_l(), flow_seed) {
            Ok(s) => s,
            Err(GeometryError::InsufficientCoverage { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut flow = syn.flow;
        if cfg.noise.outlier_fraction > 0.0 {
            let mut orng = stream_rng(extra_seed, 1);
            inject_outliers(&mut flow, cfg.noise.outlier_fraction, cfg.noise.outlier_displacement * cfg.sigma_l(), &mut orng);
        }
        return Ok(TrialSetup { index, truth, initial, flow, ground_seed, extra_seed });
    }
    Err(ScenarioError::Placement(index))
}

/// Moves `round(fraction * n)` randomly chosen `q2` by `distance` in random
/// image-plane directions; returns the indices moved.
pub fn inject_outliers<R: Rng + ?Sized>(flow: &mut [FlowVector], fraction: f64, distance: f64, rng: &mut R) -> Vec<usize> {
    let count = ((fraction * flow.len() as f64).round() as usize).min(flow.len());
    let mut picked = sample(rng, flow.len(), count).into_vec();
    picked.sort_unstable();
    for &i in &picked {
        let a = rng.gen_range(0.0..2.0 * PI);
        flow[i].q2.x += distance * a.cos();
        flow[i].q2.y += distance * a.sin();
    }
    picked
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Converged,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub index: usize,
    pub truth: ParamVector,
    pub status: TrialStatus,
    pub solution: Option<PoseSolution>,
    pub covariance: Option<PoseCovariance>,
    pub gates: Option<GateReport>,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn accepted(&self) -> bool {
        self.status == TrialStatus::Converged && self.gates.as_ref().is_some_and(|g| g.accepted)
    }

    /// Estimate minus truth, angles wrapped to `(-pi, pi]`.
    pub fn param_error(&self) -> Option<[f64; 12]> {
        self.solution.as_ref().map(|s| param_error(&s.params, &self.truth))
    }

    /// Second-camera position and Euler-angle errors.
    pub fn second_pose_error(&self) -> Option<[f64; 6]> {
        self.solution.as_ref().and_then(|s| second_pose_error(&s.params, &self.truth).ok())
    }
}

pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

pub fn param_error(est: &ParamVector, truth: &ParamVector) -> [f64; 12] {
    let mut e = [0.0; 12];
    for (k, slot) in e.iter_mut().enumerate() {
        let d = est.0[k] - truth.0[k];
        let angle = (ParamVector::ATT1..ParamVector::ATT1 + 3).contains(&k) || k >= ParamVector::ATT12;
        *slot = if angle { wrap_pi(d) } else { d };
    }
    e
}

pub fn second_pose_error(est: &ParamVector, truth: &ParamVector) -> Result<[f64; 6], GeometryError> {
    let a = compose_second_pose(&est.pose(), &est.ego())?;
    let b = compose_second_pose(&truth.pose(), &truth.ego())?;
    let dp = a.position - b.position;
    let da = a.attitude.to_vector() - b.attitude.to_vector();
    Ok([dp.x, dp.y, dp.z, wrap_pi(da.x), wrap_pi(da.y), wrap_pi(da.z)])
}

/// Prior covariance of the initial guess: the variance of each uniform
/// perturbation.
pub fn perturbation_prior(cfg: &ScenarioConfig) -> Mat15 {
    let mut p = Mat15::zeros();
    let pos = cfg.perturbation.position.powi(2) / 3.0;
    let att = cfg.perturbation.attitude_deg.to_radians().powi(2) / 3.0;
    for k in 0..3 {
        p[(POS + k, POS + k)] = pos;
        p[(ATT + k, ATT + k)] = att;
    }
    p
}

/// Solves, predicts the covariance and runs the gates for one trial.
pub fn solve_trial(cfg: &ScenarioConfig, world: &World, setup: &TrialSetup) -> TrialResult {
    let mut result = TrialResult {
        index: setup.index,
        truth: setup.truth,
        status: TrialStatus::Failed,
        solution: None,
        covariance: None,
        gates: None,
        error: None,
    };
    let ground = world.ground(setup.flow.len(), setup.ground_seed);
    let solution = match solve_pose(&setup.initial, &setup.flow, &ground, &cfg.solver) {
        Ok(s) => {
            result.status = TrialStatus::Converged;
            s
        }
        Err(EstimatorError::NotConverged(s)) => {
            result.status = TrialStatus::NotConverged;
            result.error = Some("solver did not converge".into());
            *s
        }
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let noise = NoiseModel { sigma_l: cfg.sigma_l(), sigma_h: world.sigma_h };
    match pose_and_second_frame(&solution.params, &solution.observations, &noise, &solution.weights) {
        Ok(cov) => {
            let p_minus = perturbation_prior(cfg);
            let ctx = FixContext {
                initial: &setup.initial,
                flow: &setup.flow,
                ground: &ground,
                solution: &solution,
                covariance: &cov,
                p_minus: &p_minus,
                geometry: FixGeometry { sigma_l: cfg.sigma_l(), height: cfg.height, p12: solution.params.translation() },
                sigma_f: cfg.sigma_f(),
            };
            match gate_fix(&ctx, &cfg.gates) {
                Ok(report) => result.gates = Some(report),
                Err(e) => result.error = Some(e.to_string()),
            }
            result.covariance = Some(cov);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result.solution = Some(solution);
    result
}

/// `cfg.trials` trials on the worker pool, in index order.
pub fn run_trials(cfg: &ScenarioConfig, world: &World) -> Result<Vec<TrialResult>, ScenarioError> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| draw_trial(cfg, world, i).map(|setup| solve_trial(cfg, world, &setup)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Features,
    Resolution,
    GridSpacing,
    Relief,
    TranslationMagnitude,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] =
        [Self::Features, Self::Resolution, Self::GridSpacing, Self::Relief, Self::TranslationMagnitude];

    pub fn name(self) -> &'static str {
        match self {
            Self::Features => "features",
            Self::Resolution => "resolution",
            Self::GridSpacing => "grid_spacing",
            Self::Relief => "relief",
            Self::TranslationMagnitude => "translation_magnitude",
        }
    }

    /// `cfg` with this parameter set to `value`, validated.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ScenarioError> {
        let bad = || ScenarioError::BadSweepValue { param: self.name().into(), value };
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(bad())
            }
        };
        let mut out = cfg.clone();
        match self {
            Self::Features => out.features = count()? as usize,
            Self::Resolution => out.camera.resolution = count()?,
            Self::GridSpacing => out.terrain.spacing = value,
            Self::Relief => out.terrain.relief = value,
            Self::TranslationMagnitude => out.ego.translation = value,
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ScenarioError::UnknownSweep(s.into()))
    }
}

/// Aggregates of one sweep value. Error statistics cover the converged
/// trials; predicted stds are root-mean-square over the same trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub value: f64,
    pub trials: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub failed: usize,
    pub accepted: usize,
    pub sigma_l: f64,
    pub sigma_h: f64,
    pub error_mean: [f64; 12],
    pub error_std: [f64; 12],
    pub predicted_std: [f64; 12],
    pub second_error_std: [f64; 6],
    pub predicted_second_std: [f64; 6],
}

impl MetricsRow {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.trials.max(1) as f64
    }

    /// Mean over axes of the predicted second-camera position std.
    pub fn predicted_position_std(&self) -> f64 {
        self.predicted_second_std[..3].iter().sum::<f64>() / 3.0
    }

    /// Mean over axes of the empirical second-camera position error std.
    pub fn position_error_std(&self) -> f64 {
        self.second_error_std[..3].iter().sum::<f64>() / 3.0
    }

    pub fn predicted_ego_rotation_std(&self) -> f64 {
        self.predicted_std[ParamVector::ATT12..].iter().sum::<f64>() / 3.0
    }

    pub fn from_trials(value: f64, sigma_l: f64, sigma_h: f64, trials: &[TrialResult]) -> Self {
        let count = |s: TrialStatus| trials.iter().filter(|t| t.status == s).count();
        let good: Vec<&TrialResult> =
            trials.iter().filter(|t| t.status == TrialStatus::Converged && t.covariance.is_some()).collect();
        let errors: Vec<[f64; 12]> = good.iter().filter_map(|t| t.param_error()).collect();
        let second: Vec<[f64; 6]> = good.iter().filter_map(|t| t.second_pose_error()).collect();
        let mut row = Self {
            value,
            trials: trials.len(),
            converged: count(TrialStatus::Converged),
            not_converged: count(TrialStatus::NotConverged),
            failed: count(TrialStatus::Failed),
            accepted: trials.iter().filter(|t| t.accepted()).count(),
            sigma_l,
            sigma_h,
            error_mean: [f64::NAN; 12],
            error_std: [f64::NAN; 12],
            predicted_std: [f64::NAN; 12],
            second_error_std: [f64::NAN; 6],
            predicted_second_std: [f64::NAN; 6],
        };
        for k in 0..12 {
            let (m, s) = mean_std(errors.iter().map(|e| e[k]));
            row.error_mean[k] = m;
            row.error_std[k] = s;
            row.predicted_std[k] = rms(good.iter().map(|t| t.covariance.as_ref().map_or(f64::NAN, |c| c.full[(k, k)])));
        }
        for k in 0..6 {
            row.second_error_std[k] = mean_std(second.iter().map(|e| e[k])).1;
            row.predicted_second_std[k] =
                rms(good.iter().map(|t| t.covariance.as_ref().map_or(f64::NAN, |c| c.second_frame[(k, k)])));
        }
        row
    }
}

/// Sample mean and std (n - 1 denominator).
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Square root of the mean of `variances`.
fn rms(variances: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = variances.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub param: SweepParam,
    pub rows: Vec<MetricsRow>,
}

/// One row per value of `param`, each from `cfg.trials` trials.
pub fn run_monte_carlo(cfg: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<MetricsTable, ScenarioError> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let cfg_v = param.apply(cfg, value)?;
        let world = World::bounded(&cfg_v)?;
        let trials = run_trials(&cfg_v, &world)?;
        rows.push(MetricsRow::from_trials(value, cfg_v.sigma_l(), world.sigma_h, &trials));
    }
    Ok(MetricsTable { param, rows })
}
