//! Flat-earth strapdown simulation driven by a scripted trajectory.

use nalgebra::Rotation3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::camgeom::{dcm_to_euler, EulerAngles, GeometryError, Mat3, Vec3};

pub const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.80665);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuConfig {
    /// White specific-force noise, std per sample (m/s^2).
    pub accel_noise: f64,
    /// Angle random walk (rad/sqrt(s)).
    pub gyro_noise: f64,
    /// Constant true accelerometer bias, body frame (m/s^2).
    pub accel_bias: [f64; 3],
    /// Constant true gyro bias, body frame (rad/s).
    pub gyro_bias: [f64; 3],
    /// Bias random-walk variance rate used by the filter (per second).
    pub bias_walk: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            accel_noise: 0.5,
            gyro_noise: 5e-5,
            accel_bias: [3e-3, -2e-3, 2e-3],
            gyro_bias: [2e-6, -3e-6, 1e-6],
            bias_walk: 1e-12,
        }
    }
}

/// Body-frame increments over one sample interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub dtheta: Vec3,
    pub dvel: Vec3,
    pub dt: f64,
}

/// One draw of sensor noise for a sample interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuNoise {
    pub dtheta: Vec3,
    pub dvel: Vec3,
}

impl ImuNoise {
    pub fn draw<R: Rng + ?Sized>(cfg: &ImuConfig, dt: f64, rng: &mut R) -> Self {
        let mut v = || Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let dtheta = v() * (cfg.gyro_noise * dt.sqrt());
        let dvel = v() * (cfg.accel_noise * dt);
        Self { dtheta, dvel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body to L-frame.
    pub rotation: Mat3,
}

impl NavState {
    pub fn attitude(&self) -> Result<EulerAngles, GeometryError> {
        dcm_to_euler(&self.rotation)
    }

    /// Attitude by `exp([dtheta]x)`, velocity with the start-of-interval
    /// rotation, position by the trapezoid rule.
    pub fn advance(&mut self, s: &ImuSample) {
        let v0 = self.velocity;
        self.velocity = v0 + self.rotation * s.dvel + GRAVITY * s.dt;
        self.position += (v0 + self.velocity) * (0.5 * s.dt);
        self.rotation *= Rotation3::new(s.dtheta).into_inner();
    }
}

/// Increments that carry `state` from `t` onto the trajectory at `t + dt`.
pub fn true_increment<T: Trajectory + ?Sized>(traj: &T, state: &NavState, t: f64, dt: f64) -> ImuSample {
    let next = traj.kinematics(t + dt);
    let rel = state.rotation.transpose() * next.rotation;
    let dtheta = Rotation3::from_matrix(&rel).scaled_axis();
    let dvel = state.rotation.transpose() * (next.velocity - state.velocity - GRAVITY * dt);
    ImuSample { dtheta, dvel, dt }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsTruthAndNav {
    pub time: f64,
    pub truth: NavState,
    pub nav: NavState,
    pub imu: ImuConfig,
    pub accel_bias_estimate: Vec3,
    pub gyro_bias_estimate: Vec3,
}

impl InsTruthAndNav {
    /// Truth on the trajectory at `t0`; nav displaced by the given errors
    /// (`truth - nav`), attitude error as the Euler angles of `D_r D_c^T`.
    pub fn new<T: Trajectory + ?Sized>(traj: &T, t0: f64, imu: ImuConfig, dp: Vec3, dv: Vec3, datt: EulerAngles) -> Self {
        let k = traj.kinematics(t0);
        let truth = NavState { position: k.position, velocity: k.velocity, rotation: k.rotation };
        let nav = NavState {
            position: k.position - dp,
            velocity: k.velocity - dv,
            rotation: datt.dcm().transpose() * k.rotation,
        };
        Self { time: t0, truth, nav, imu, accel_bias_estimate: Vec3::zeros(), gyro_bias_estimate: Vec3::zeros() }
    }

    /// Advances truth and nav by `dt` with a fresh noise draw; returns the
    /// bias-compensated sample the navigator integrated.
    pub fn propagate<T: Trajectory + ?Sized, R: Rng + ?Sized>(&mut self, traj: &T, dt: f64, rng: &mut R) -> ImuSample {
        let noise = ImuNoise::draw(&self.imu, dt, rng);
        self.propagate_with(traj, dt, &noise)
    }

    pub fn propagate_with<T: Trajectory + ?Sized>(&mut self, traj: &T, dt: f64, noise: &ImuNoise) -> ImuSample {
        let truth = true_increment(traj, &self.truth, self.time, dt);
        let ba = Vec3::from(self.imu.accel_bias);
        let bg = Vec3::from(self.imu.gyro_bias);
        let measured = ImuSample {
            dtheta: truth.dtheta + (bg - self.gyro_bias_estimate) * dt + noise.dtheta,
            dvel: truth.dvel + (ba - self.accel_bias_estimate) * dt + noise.dvel,
            dt,
        };
        self.truth.advance(&truth);
        self.nav.advance(&measured);
        self.time += dt;
        measured
    }

    /// `truth - nav` as `(dp, dv, Euler(D_r D_c^T))`.
    pub fn errors(&self) -> Result<(Vec3, Vec3, EulerAngles), GeometryError> {
        Ok((
            self.truth.position - self.nav.position,
            self.truth.velocity - self.nav.velocity,
            dcm_to_euler(&(self.truth.rotation * self.nav.rotation.transpose()))?,
        ))
    }
}
