//! Quick built-in checks run by `dtm-nav selftest`.

use std::fmt;

use nalgebra::DMatrix;

use crate::camgeom::{epipolar_residual, FeatureObservation, ParamVector};
use crate::estimator::{residual, solve_pose, trace_observations};
use crate::insekf::ImuConfig;
use crate::scenario::montecarlo::{draw_trial, param_error};
use crate::scenario::{run_flight, ScenarioConfig, ScenarioError, World};
use crate::uncertainty::jacobian_params;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for SelfCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "ok  " } else { "FAIL" }, self.name, self.detail)
    }
}

fn check(name: &'static str, result: Result<(bool, String), ScenarioError>) -> SelfCheck {
    match result {
        Ok((pass, detail)) => SelfCheck { name, pass, detail },
        Err(e) => SelfCheck { name, pass: false, detail: e.to_string() },
    }
}

fn noiseless() -> ScenarioConfig {
    let mut cfg = ScenarioConfig { features: 40, ..ScenarioConfig::default() };
    cfg.noise.sigma_l = Some(0.0);
    cfg.noise.sigma_h = Some(0.0);
    cfg
}

fn consistency() -> Result<(bool, String), ScenarioError> {
    let cfg = noiseless();
    let world = World::bounded(&cfg)?;
    let mut worst = 0.0f64;
    for i in 0..5 {
        let setup = draw_trial(&cfg, &world, i)?;
        let obs = trace_observations(&setup.truth.pose(), &setup.flow, &world.truth)?;
        let ego = setup.truth.ego();
        let r12 = ego.rotation_matrix();
        for o in &obs {
            let r = residual(&setup.truth, o)?;
            worst = worst.max(r.norm()).max(epipolar_residual(&o.q1, &o.q2, &r12, &ego.translation).abs());
        }
    }
    Ok((worst < 1e-9, format!("max residual at truth {worst:.1e}")))
}

fn stacked(p: &ParamVector, obs: &[FeatureObservation]) -> DMatrix<f64> {
    DMatrix::from_iterator(3 * obs.len(), 1, obs.iter().flat_map(|f| residual(p, f).map(|r| r.data.0[0]).unwrap_or([f64::NAN; 3])))
}

fn jacobian() -> Result<(bool, String), ScenarioError> {
    let cfg = noiseless();
    let world = World::bounded(&cfg)?;
    let setup = draw_trial(&cfg, &world, 0)?;
    let theta = setup.truth;
    let obs = trace_observations(&theta.pose(), &setup.flow, &world.truth)?;
    let j = jacobian_params(&theta, &obs)?;
    let mut worst = 0.0f64;
    for k in 0..12 {
        let h = if k < 3 || (6..9).contains(&k) { 1e-4 } else { 1e-6 };
        let (mut a, mut b) = (theta, theta);
        a.0[k] += h;
        b.0[k] -= h;
        let fd = (stacked(&a, &obs) - stacked(&b, &obs)) / (2.0 * h);
        worst = worst.max((j.column(k) - fd.column(0)).norm() / fd.norm().max(1e-300));
    }
    Ok((worst < 1e-5, format!("max column error vs central differences {worst:.1e}")))
}

fn recovery() -> Result<(bool, String), ScenarioError> {
    let cfg = noiseless();
    let world = World::bounded(&cfg)?;
    let mut recovered = 0;
    let trials = 5;
    for i in 0..trials {
        let setup = draw_trial(&cfg, &world, i)?;
        let ground = world.ground(setup.flow.len(), setup.ground_seed);
        if let Ok(sol) = solve_pose(&setup.initial, &setup.flow, &ground, &cfg.solver) {
            let e = param_error(&sol.params, &setup.truth);
            if e.iter().all(|v| v.abs() < 1e-6) {
                recovered += 1;
            }
        }
    }
    Ok((recovered == trials, format!("{recovered}/{trials} noiseless poses recovered")))
}

fn flight() -> Result<(bool, String), ScenarioError> {
    let mut cfg = ScenarioConfig { features: 60, ..ScenarioConfig::default() };
    cfg.flight.duration = 40.0;
    cfg.flight.imu_rate = 50.0;
    cfg.flight.fix_interval = 10.0;
    cfg.imu = ImuConfig { accel_noise: 0.0, gyro_noise: 0.0, accel_bias: [0.0; 3], gyro_bias: [0.0; 3], bias_walk: 0.0 };
    cfg.flight.init_position_std = 0.0;
    cfg.flight.init_velocity_std = 0.0;
    cfg.flight.init_attitude_std = 0.0;
    cfg.flight.accel_bias_std = 0.0;
    cfg.flight.gyro_bias_std = 0.0;
    let log = run_flight(&cfg)?;
    let fixes = log.applied_fixes().count();
    let exact = log.samples.iter().all(|s| s.nav == s.truth);
    Ok((fixes > 0 && exact, format!("{fixes} fixes applied, navigation equals truth: {exact}")))
}

fn config_round_trip() -> Result<(bool, String), ScenarioError> {
    let cfg = ScenarioConfig::default();
    let back = ScenarioConfig::from_toml(&cfg.to_toml())?;
    let valid = cfg.validate().is_ok();
    Ok((back == cfg && valid, "default configuration validates and survives TOML".into()))
}

/// Runs every check; takes a few seconds.
pub fn run_selftest() -> Vec<SelfCheck> {
    vec![
        check("config", config_round_trip()),
        check("consistency", consistency()),
        check("jacobian", jacobian()),
        check("recovery", recovery()),
        check("flight", flight()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_selftest() {
            assert!(c.pass, "{c}");
        }
    }
}
