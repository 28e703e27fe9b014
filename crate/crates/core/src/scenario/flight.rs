//! Closed-loop INS/vision flight over a periodic terrain tile.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::montecarlo::{inject_outliers, wrap_pi};
use super::{gate_fix, stream_rng, FixContext, ScenarioConfig, ScenarioError, World};
use crate::camgeom::{
    compose_second_pose, dcm_to_euler, generate_observations, relative_motion, CameraPose, EulerAngles, GeometryError, ParamVector,
    Vec3,
};
use crate::estimator::{solve_pose, EstimatorError};
use crate::guards::{Check, FixGeometry, GateReport, StrikeAction, StrikeCounter};
use crate::insekf::trajectory::WaypointLoop;
use crate::insekf::{
    apply_correction, build_transition, form_measurement, measurement_matrix, measurement_update, process_noise, time_update,
    ImuNoise, InsTruthAndNav, Mat15, Mat6x15, NavErrorState, NavState,
};
use crate::uncertainty::{pose_and_second_frame, NoiseModel};

/// Per-fix decision injected by the caller of [`run_flight_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixOverride {
    /// Let the gates decide.
    Keep,
    /// Run the fix but force the gate verdict to failure.
    Fail,
    /// Do not attempt the fix at all.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixStatus {
    Applied,
    Rejected,
    Skipped,
    VisionDisabled,
}

impl FixStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Applied => "applied",
            Self::Rejected => "rejected",
            Self::Skipped => "skipped",
            Self::VisionDisabled => "vision_disabled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixRecord {
    pub index: usize,
    pub time: f64,
    pub status: FixStatus,
    /// Applied, then retracted by the three-strikes rule.
    pub rolled_back: bool,
    pub report: Option<GateReport>,
    pub iterations: Option<usize>,
    /// `sqrt(diag(Sigma_C2))`: position then attitude.
    pub sigma_c2_std: Option<[f64; 6]>,
    /// Vision second pose minus truth: position then attitude.
    pub vision_error: Option<[f64; 6]>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightSample {
    pub time: f64,
    pub truth: NavState,
    /// Uncorrected INS driven by the same sensor noise.
    pub raw: NavState,
    /// Corrected navigation.
    pub nav: NavState,
    /// `sqrt(diag(P))` of position, velocity and attitude errors.
    pub nav_std: [f64; 9],
}

/// `truth - estimate` of position, velocity, and the Euler angles of
/// `D_truth D_estimate^T`.
pub fn nav_errors(truth: &NavState, est: &NavState) -> [Vec3; 3] {
    let att = dcm_to_euler(&(truth.rotation * est.rotation.transpose()))
        .map(EulerAngles::to_vector)
        .unwrap_or_else(|_| Vec3::repeat(f64::NAN));
    [truth.position - est.position, truth.velocity - est.velocity, att]
}

impl FlightSample {
    pub fn nav_error(&self) -> [Vec3; 3] {
        nav_errors(&self.truth, &self.nav)
    }

    pub fn raw_error(&self) -> [Vec3; 3] {
        nav_errors(&self.truth, &self.raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    /// One sample per IMU tick, starting at time zero.
    pub samples: Vec<FlightSample>,
    pub fixes: Vec<FixRecord>,
    pub sigma_l: f64,
    pub sigma_h: f64,
    pub disabled_at: Option<f64>,
    pub final_state: NavErrorState,
}

impl TrajectoryLog {
    fn max_abs(&self, corrected: bool, quantity: usize, from: f64) -> [f64; 3] {
        let mut m = [0.0f64; 3];
        for s in self.samples.iter().filter(|s| s.time >= from) {
            let e = if corrected { s.nav_error() } else { s.raw_error() }[quantity];
            for k in 0..3 {
                m[k] = m[k].max(e[k].abs());
            }
        }
        m
    }

    /// Per-axis maximum of `|position error|` over the run.
    pub fn max_position_error(&self, corrected: bool) -> [f64; 3] {
        self.max_abs(corrected, 0, 0.0)
    }

    pub fn max_velocity_error(&self, corrected: bool, from: f64) -> [f64; 3] {
        self.max_abs(corrected, 1, from)
    }

    pub fn applied_fixes(&self) -> impl Iterator<Item = &FixRecord> {
        self.fixes.iter().filter(|f| f.status == FixStatus::Applied && !f.rolled_back)
    }

    pub fn sample_at(&self, time: f64) -> Option<&FlightSample> {
        self.samples.iter().min_by(|a, b| (a.time - time).abs().total_cmp(&(b.time - time).abs()))
    }
}

fn camera_pose(s: &NavState) -> Result<CameraPose, GeometryError> {
    Ok(CameraPose::new(s.position, dcm_to_euler(&s.rotation)?))
}

fn std_diag(p: &Mat15) -> [f64; 9] {
    std::array::from_fn(|i| p[(i, i)].max(0.0).sqrt())
}

struct Filter<'a> {
    path: &'a WaypointLoop,
    dt: f64,
    q: Mat15,
}

impl Filter<'_> {
    /// One IMU tick of the navigator and the covariance.
    fn step(&self, ins: &mut InsTruthAndNav, state: &mut NavErrorState, noise: &ImuNoise) -> Result<(), GeometryError> {
        let attitude = dcm_to_euler(&ins.nav.rotation)?;
        let sample = ins.propagate_with(self.path, self.dt, noise);
        let a = build_transition(attitude, &sample.dvel, self.dt);
        *state = time_update(state, &a, &self.q);
        Ok(())
    }
}

struct Checkpoint {
    tick: usize,
    fix: usize,
    ins: InsTruthAndNav,
    state: NavErrorState,
}

/// Vision pose, its covariance and the gate verdict for one fix.
struct FixAttempt {
    report: GateReport,
    record: FixRecord,
    update: Option<NavErrorState>,
}

fn failed(name: &str) -> GateReport {
    GateReport::new(vec![Check { name: name.into(), lhs: 0.0, rhs: 1.0, pass: false }])
}

pub fn run_flight(cfg: &ScenarioConfig) -> Result<TrajectoryLog, ScenarioError> {
    run_flight_with(cfg, |_, _| FixOverride::Keep)
}

/// Flight with a per-fix override; `hook(index, time)` is called before each
/// fix while vision is enabled.
pub fn run_flight_with<F>(cfg: &ScenarioConfig, mut hook: F) -> Result<TrajectoryLog, ScenarioError>
where
    F: FnMut(usize, f64) -> FixOverride,
{
    cfg.validate()?;
    let fl = &cfg.flight;
    let world = World::tiled(cfg)?;
    let heights = world.map.heights();
    let mean_height = heights.iter().sum::<f64>() / heights.len() as f64;
    let path = WaypointLoop::new(&fl.path.waypoints, fl.path.turn_radius, fl.height + mean_height, fl.speed)?;

    let dt = 1.0 / fl.imu_rate;
    let n_ticks = (fl.duration * fl.imu_rate).round() as usize;
    let fix_ticks = ((fl.fix_interval * fl.imu_rate).round() as usize).max(1);
    let baseline_ticks = ((fl.baseline / fl.speed * fl.imu_rate).round() as usize).max(1);

    let mut init_rng = stream_rng(cfg.seed, 0);
    let mut draw3 = |std: f64| {
        let n = Normal::new(0.0, std).expect("validated std");
        Vec3::new(n.sample(&mut init_rng), n.sample(&mut init_rng), n.sample(&mut init_rng))
    };
    let dp = draw3(fl.init_position_std);
    let dv = draw3(fl.init_velocity_std);
    let datt = EulerAngles::from_vector(&draw3(fl.init_attitude_std));
    let mut noise_rng = stream_rng(cfg.seed, 1);
    let noise: Vec<ImuNoise> = (0..n_ticks).map(|_| ImuNoise::draw(&cfg.imu, dt, &mut noise_rng)).collect();

    let mut ins = InsTruthAndNav::new(&path, 0.0, cfg.imu, dp, dv, datt);
    let mut raw = ins.clone();
    let mut p0 = Mat15::zeros();
    for k in 0..3 {
        p0[(k, k)] = fl.init_position_std.powi(2);
        p0[(3 + k, 3 + k)] = fl.init_velocity_std.powi(2);
        p0[(6 + k, 6 + k)] = fl.init_attitude_std.powi(2);
        p0[(9 + k, 9 + k)] = fl.accel_bias_std.powi(2);
        p0[(12 + k, 12 + k)] = fl.gyro_bias_std.powi(2);
    }
    let mut state = NavErrorState::new(p0);
    let filter = Filter { path: &path, dt, q: process_noise(&cfg.imu, dt) };
    let h = measurement_matrix();

    let sample = |tick: usize, ins: &InsTruthAndNav, raw: &InsTruthAndNav, state: &NavErrorState| FlightSample {
        time: tick as f64 / fl.imu_rate,
        truth: ins.truth,
        raw: raw.nav,
        nav: ins.nav,
        nav_std: std_diag(&state.p),
    };
    let mut samples = Vec::with_capacity(n_ticks + 1);
    samples.push(sample(0, &ins, &raw, &state));
    let mut fixes: Vec<FixRecord> = Vec::new();
    let mut counter = StrikeCounter::default();
    let mut checkpoint: Option<Checkpoint> = None;
    let mut disabled_at = None;

    for tick in 1..=n_ticks {
        let nz = &noise[tick - 1];
        filter.step(&mut ins, &mut state, nz)?;
        raw.propagate_with(&path, dt, nz);

        if tick % fix_ticks == 0 && tick >= baseline_ticks {
            let index = fixes.len();
            let time = tick as f64 / fl.imu_rate;
            let blank = FixRecord {
                index,
                time,
                status: FixStatus::Skipped,
                rolled_back: false,
                report: None,
                iterations: None,
                sigma_c2_std: None,
                vision_error: None,
                message: None,
            };
            if counter.disabled() {
                fixes.push(FixRecord { status: FixStatus::VisionDisabled, ..blank });
            } else {
                let choice = hook(index, time);
                if choice == FixOverride::Skip {
                    fixes.push(blank);
                } else {
                    let frame1 = &samples[tick - baseline_ticks];
                    let mut attempt = attempt_fix(cfg, &world, &h, (&frame1.truth, &frame1.nav), &ins, &state, index, blank)?;
                    if choice == FixOverride::Fail {
                        let mut checks = attempt.report.checks;
                        checks.push(Check { name: "forced".into(), lhs: 1.0, rhs: 0.0, pass: false });
                        attempt.report = GateReport::new(checks);
                    }
                    let action = counter.update(&mut attempt.report);
                    let mut record = attempt.record;
                    record.report = Some(attempt.report);
                    match action {
                        StrikeAction::Apply => {
                            checkpoint = Some(Checkpoint { tick, fix: index, ins: ins.clone(), state });
                            state = attempt.update.expect("accepted fixes carry an update");
                            apply_correction(&mut ins, &mut state);
                            record.status = FixStatus::Applied;
                        }
                        StrikeAction::Suppress | StrikeAction::Ignore => record.status = FixStatus::Rejected,
                        StrikeAction::DisableAndRollBack => {
                            record.status = FixStatus::Rejected;
                            disabled_at = Some(time);
                            if let Some(cp) = checkpoint.take() {
                                fixes[cp.fix].rolled_back = true;
                                ins = cp.ins;
                                state = cp.state;
                                samples[cp.tick].nav = ins.nav;
                                samples[cp.tick].nav_std = std_diag(&state.p);
                                for t in cp.tick + 1..tick {
                                    filter.step(&mut ins, &mut state, &noise[t - 1])?;
                                    samples[t].nav = ins.nav;
                                    samples[t].nav_std = std_diag(&state.p);
                                }
                                filter.step(&mut ins, &mut state, nz)?;
                            }
                        }
                    }
                    fixes.push(record);
                }
            }
        }
        samples.push(sample(tick, &ins, &raw, &state));
    }

    Ok(TrajectoryLog { samples, fixes, sigma_l: cfg.sigma_l(), sigma_h: world.sigma_h, disabled_at, final_state: state })
}

#[allow(clippy::too_many_arguments)]
fn attempt_fix(
    cfg: &ScenarioConfig,
    world: &World,
    h: &Mat6x15,
    frame1: (&NavState, &NavState),
    ins: &InsTruthAndNav,
    state: &NavErrorState,
    index: usize,
    mut record: FixRecord,
) -> Result<FixAttempt, ScenarioError> {
    let truth1 = camera_pose(frame1.0)?;
    let truth2 = camera_pose(&ins.truth)?;
    let nav1 = camera_pose(frame1.1)?;
    let nav2 = camera_pose(&ins.nav)?;
    let truth_ego = relative_motion(&truth1, &truth2)?;
    let initial = ParamVector::from_parts(&nav1, &relative_motion(&nav1, &nav2)?);

    let mut rng = stream_rng(cfg.seed, 1000 + index as u64);
    let flow_seed: u64 = rng.gen();
    let ground_seed: u64 = rng.gen();
    let sigma_l = cfg.sigma_l();
    let rejected = |record: FixRecord, name: &str, message: String| FixAttempt {
        report: failed(name),
        record: FixRecord { status: FixStatus::Rejected, message: Some(message), ..record },
        update: None,
    };
    let mut flow = match generate_observations(&truth1, &truth_ego, &world.truth, cfg.features, cfg.fov(), sigma_l, flow_seed) {
        Ok(s) => s.flow,
        Err(e) => return Ok(rejected(record, "imagery", e.to_string())),
    };
    if cfg.noise.outlier_fraction > 0.0 {
        inject_outliers(&mut flow, cfg.noise.outlier_fraction, cfg.noise.outlier_displacement * sigma_l, &mut rng);
    }
    let ground = world.ground(flow.len(), ground_seed);
    let solution = match solve_pose(&initial, &flow, &ground, &cfg.solver) {
        Ok(s) => s,
        Err(EstimatorError::NotConverged(s)) => {
            record.iterations = Some(s.iterations);
            return Ok(rejected(record, "solver_converged", "solver did not converge".into()));
        }
        Err(e) => return Ok(rejected(record, "solver_converged", e.to_string())),
    };
    record.iterations = Some(solution.iterations);
    let noise = NoiseModel { sigma_l, sigma_h: world.sigma_h };
    let cov = match pose_and_second_frame(&solution.params, &solution.observations, &noise, &solution.weights) {
        Ok(c) => c,
        Err(e) => return Ok(rejected(record, "covariance", e.to_string())),
    };
    let vision = compose_second_pose(&solution.params.pose(), &solution.params.ego())?;
    let dpos = vision.position - truth2.position;
    let datt = vision.attitude.to_vector() - truth2.attitude.to_vector();
    record.vision_error = Some([dpos.x, dpos.y, dpos.z, wrap_pi(datt.x), wrap_pi(datt.y), wrap_pi(datt.z)]);
    record.sigma_c2_std = Some(std::array::from_fn(|i| cov.second_frame[(i, i)].max(0.0).sqrt()));

    let height = world
        .map
        .sample_height(vision.position.x, vision.position.y)
        .map(|g| vision.position.z - g)
        .unwrap_or(cfg.flight.height);
    let ctx = FixContext {
        initial: &initial,
        flow: &flow,
        ground: &ground,
        solution: &solution,
        covariance: &cov,
        p_minus: &state.p,
        geometry: FixGeometry { sigma_l, height, p12: solution.params.translation() },
        sigma_f: cfg.sigma_f(),
    };
    let mut report = gate_fix(&ctx, &cfg.gates)?;
    let update = form_measurement(&vision, &cov.second_frame, &ins.nav)
        .and_then(|meas| measurement_update(state, &meas, h))
        .ok();
    if update.is_none() {
        let mut checks = report.checks;
        checks.push(Check { name: "innovation".into(), lhs: 0.0, rhs: 1.0, pass: false });
        report = GateReport::new(checks);
    }
    Ok(FixAttempt { report, record, update })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::insekf::ImuConfig;

    fn short() -> ScenarioConfig {
        let mut cfg = ScenarioConfig { features: 60, ..ScenarioConfig::default() };
        cfg.flight.duration = 50.0;
        cfg.flight.imu_rate = 50.0;
        cfg.flight.fix_interval = 10.0;
        cfg
    }

    #[test]
    fn log_is_on_the_imu_grid() {
        let cfg = short();
        let log = run_flight(&cfg).unwrap();
        assert_eq!(log.samples.len(), 2501);
        for (i, s) in log.samples.iter().enumerate() {
            assert_eq!(s.time, i as f64 / 50.0);
        }
        let times: Vec<f64> = log.fixes.iter().map(|f| f.time).collect();
        assert_eq!(times, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn noiseless_sensors_track_truth() {
        let mut cfg = short();
        cfg.imu = ImuConfig { accel_noise: 0.0, gyro_noise: 0.0, accel_bias: [0.0; 3], gyro_bias: [0.0; 3], bias_walk: 0.0 };
        cfg.flight.init_position_std = 0.0;
        cfg.flight.init_velocity_std = 0.0;
        cfg.flight.init_attitude_std = 0.0;
        cfg.flight.accel_bias_std = 0.0;
        cfg.flight.gyro_bias_std = 0.0;
        let log = run_flight(&cfg).unwrap();
        assert!(log.applied_fixes().count() > 0);
        for s in &log.samples {
            assert_eq!(s.raw, s.truth);
            assert_eq!(s.nav, s.truth);
        }
    }

    #[test]
    fn flights_are_deterministic() {
        let cfg = short();
        assert_eq!(run_flight(&cfg).unwrap(), run_flight(&cfg).unwrap());
    }

    #[test]
    fn skipped_fixes_leave_a_pure_ins_run() {
        let cfg = short();
        let log = run_flight_with(&cfg, |_, _| FixOverride::Skip).unwrap();
        assert!(log.fixes.iter().all(|f| f.status == FixStatus::Skipped));
        for s in &log.samples {
            assert_eq!(s.nav, s.raw);
        }
    }
}
