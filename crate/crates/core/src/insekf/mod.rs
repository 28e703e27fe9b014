//! Inertial navigation simulation and the 15-state error-state filter.
//!
//! State layout: position error, velocity error, attitude error (Euler angles
//! of `D_r D_c^T`), accelerometer bias, gyro bias. Errors are `truth - nav`.

mod ins;
pub mod trajectory;

use nalgebra::{DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::camgeom::{dcm_to_euler, euler_to_dcm, skew, CameraPose, EulerAngles, GeometryError, Mat3, Vec3};

pub use ins::{true_increment, ImuConfig, ImuNoise, ImuSample, InsTruthAndNav, NavState, GRAVITY};

pub type Vec15 = SVector<f64, 15>;
pub type Mat15 = SMatrix<f64, 15, 15>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat6x15 = SMatrix<f64, 6, 15>;

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const ACCEL_BIAS: usize = 9;
pub const GYRO_BIAS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavErrorState {
    pub x: Vec15,
    pub p: Mat15,
}

impl NavErrorState {
    pub fn new(p: Mat15) -> Self {
        Self { x: Vec15::zeros(), p }
    }

    pub fn accel_bias(&self) -> Vec3 {
        self.x.fixed_rows::<3>(ACCEL_BIAS).into()
    }

    pub fn gyro_bias(&self) -> Vec3 {
        self.x.fixed_rows::<3>(GYRO_BIAS).into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionMeasurement {
    pub z: Vec6,
    pub r: Mat6,
}

/// `A_k = I + Phi dt`.
///
/// Velocity error couples to the accelerometer bias through `-DCM` and the
/// attitude error to the gyro bias through `+DCM`, the signs that follow from
/// `truth - nav` errors with additive sensor biases.
pub fn build_transition(euler: EulerAngles, dv: &Vec3, dt: f64) -> Mat15 {
    let dcm = euler_to_dcm(euler);
    let f_vec = dcm * dv / dt;
    let mut phi = Mat15::zeros();
    phi.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&Mat3::identity());
    phi.fixed_view_mut::<3, 3>(VEL, ATT).copy_from(&skew(&f_vec));
    phi.fixed_view_mut::<3, 3>(VEL, ACCEL_BIAS).copy_from(&(-dcm));
    phi.fixed_view_mut::<3, 3>(ATT, GYRO_BIAS).copy_from(&dcm);
    Mat15::identity() + phi * dt
}

pub fn process_noise(imu: &ImuConfig, dt: f64) -> Mat15 {
    let mut q = Mat15::zeros();
    for k in 0..3 {
        q[(VEL + k, VEL + k)] = imu.accel_noise.powi(2) * dt * dt;
        q[(ATT + k, ATT + k)] = imu.gyro_noise.powi(2) * dt;
        q[(ACCEL_BIAS + k, ACCEL_BIAS + k)] = imu.bias_walk * dt;
        q[(GYRO_BIAS + k, GYRO_BIAS + k)] = imu.bias_walk * dt;
    }
    q
}

/// Resets the navigation errors, keeps the biases, propagates `P`.
pub fn time_update(state: &NavErrorState, a: &Mat15, q: &Mat15) -> NavErrorState {
    let mut x = state.x;
    x.fixed_rows_mut::<9>(0).fill(0.0);
    let p = a * state.p * a.transpose() + q;
    NavErrorState { x, p: (p + p.transpose()) * 0.5 }
}

pub fn measurement_matrix() -> Mat6x15 {
    let mut h = Mat6x15::zeros();
    for k in 0..3 {
        h[(k, POS + k)] = 1.0;
        h[(3 + k, ATT + k)] = 1.0;
    }
    h
}

/// Gain, state update, and Joseph-form covariance update.
pub fn measurement_update(prior: &NavErrorState, meas: &VisionMeasurement, h: &Mat6x15) -> Result<NavErrorState, FilterError> {
    let ph = prior.p * h.transpose();
    let s = h * ph + meas.r;
    let s_inv = s.cholesky().ok_or(FilterError::SingularInnovation)?.inverse();
    let k = ph * s_inv;
    let x = prior.x + k * (meas.z - h * prior.x);
    let ikh = Mat15::identity() - k * h;
    let p = ikh * prior.p * ikh.transpose() + k * meas.r * k.transpose();
    Ok(NavErrorState { x, p })
}

/// `Z = [p_vision - p_nav, Euler(D_m D_c^T)]` with `R_k = Sigma_C2`.
pub fn form_measurement(vision: &CameraPose, sigma_c2: &Mat6, nav: &NavState) -> Result<VisionMeasurement, FilterError> {
    let mut z = Vec6::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&(vision.position - nav.position));
    let d = dcm_to_euler(&(vision.rotation() * nav.rotation.transpose()))?;
    z.fixed_rows_mut::<3>(3).copy_from(&d.to_vector());
    Ok(VisionMeasurement { z, r: *sigma_c2 })
}

/// Feeds the estimate back into the navigator and clears the error part of
/// `state`.
pub fn apply_correction(ins: &mut InsTruthAndNav, state: &mut NavErrorState) {
    let x = state.x;
    ins.nav.position += x.fixed_rows::<3>(POS);
    ins.nav.velocity += x.fixed_rows::<3>(VEL);
    let e = EulerAngles::from_vector(&x.fixed_rows::<3>(ATT).into());
    ins.nav.rotation = euler_to_dcm(e) * ins.nav.rotation;
    ins.accel_bias_estimate = state.accel_bias();
    ins.gyro_bias_estimate = state.gyro_bias();
    state.x.fixed_rows_mut::<9>(0).fill(0.0);
}

/// Symmetric with eigenvalues no lower than `-1e-9 trace`.
pub fn is_valid_covariance<const N: usize>(p: &SMatrix<f64, N, N>) -> bool {
    if (p - p.transpose()).amax() > 1e-9 * p.amax().max(f64::MIN_POSITIVE) {
        return false;
    }
    let tr = p.trace();
    DMatrix::from_column_slice(N, N, p.as_slice()).symmetric_eigenvalues().iter().all(|&l| l >= -1e-9 * tr)
}

#[cfg(test)]
mod tests {
    use super::trajectory::{nadir_rotation, Kinematics, Trajectory};
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> Mat15 {
        let m = Mat15::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        m * m.transpose() * scale + Mat15::identity() * 1e-3
    }

    #[test]
    fn transition_limits_and_structure() {
        let e = EulerAngles::new(0.3, -0.2, 1.1);
        let dv = Vec3::new(0.1, -0.2, 0.098);
        assert_abs_diff_eq!(build_transition(e, &(dv * 1e-12), 1e-12), Mat15::identity(), epsilon = 1e-10);
        let dt = 0.01;
        let a = build_transition(e, &dv, dt);
        let dcm = euler_to_dcm(e);
        let phi = (a - Mat15::identity()) / dt;
        assert_abs_diff_eq!(phi.fixed_view::<3, 3>(POS, VEL).into_owned(), Mat3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(phi.fixed_view::<3, 3>(VEL, ACCEL_BIAS).into_owned(), -dcm, epsilon = 1e-12);
        assert_abs_diff_eq!(phi.fixed_view::<3, 3>(ATT, GYRO_BIAS).into_owned(), dcm, epsilon = 1e-12);
        let nonzero = phi.iter().filter(|v| **v != 0.0).count();
        assert!(nonzero <= 3 + 6 + 9 + 9);
    }

    #[test]
    fn level_gravity_gives_skew_block() {
        let g = 9.80665;
        let dt = 0.01;
        let a = build_transition(EulerAngles::new(0.0, 0.0, 0.0), &Vec3::new(0.0, 0.0, g * dt), dt);
        let block = (a.fixed_view::<3, 3>(VEL, ATT).into_owned()) / dt;
        let expected = Mat3::new(0.0, -g, 0.0, g, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(block, expected, epsilon = 1e-9);
    }

    /// Nonlinear error propagation over one step against `A_k`.
    #[test]
    fn transition_matches_numerical_linearization() {
        let e = EulerAngles::new(PI - 0.1, 0.05, 0.7);
        let rot = euler_to_dcm(e);
        let dt = 0.01;
        let dvel = Vec3::new(0.3, -0.1, -9.80665) * dt;
        let sample = ImuSample { dtheta: Vec3::new(1e-4, -2e-4, 3e-4), dvel, dt };
        let truth = NavState { position: Vec3::new(0.0, 0.0, 1000.0), velocity: Vec3::new(200.0, 5.0, 0.0), rotation: rot };
        let step = |x: &Vec15| -> Vec15 {
            // nav displaced by x; sensor biases x[9..15] enter the nav samples
            let dp: Vec3 = x.fixed_rows::<3>(POS).into();
            let dv: Vec3 = x.fixed_rows::<3>(VEL).into();
            let da = EulerAngles::from_vector(&x.fixed_rows::<3>(ATT).into());
            let mut t = truth;
            let mut n = NavState { position: truth.position - dp, velocity: truth.velocity - dv, rotation: euler_to_dcm(da).transpose() * rot };
            let ba: Vec3 = x.fixed_rows::<3>(ACCEL_BIAS).into();
            let bg: Vec3 = x.fixed_rows::<3>(GYRO_BIAS).into();
            t.advance(&sample);
            n.advance(&ImuSample { dtheta: sample.dtheta + bg * dt, dvel: sample.dvel + ba * dt, dt });
            let mut out = Vec15::zeros();
            out.fixed_rows_mut::<3>(POS).copy_from(&(t.position - n.position));
            out.fixed_rows_mut::<3>(VEL).copy_from(&(t.velocity - n.velocity));
            out.fixed_rows_mut::<3>(ATT).copy_from(&dcm_to_euler(&(t.rotation * n.rotation.transpose())).unwrap().to_vector());
            out.fixed_rows_mut::<6>(ACCEL_BIAS).copy_from(&x.fixed_rows::<6>(ACCEL_BIAS));
            out
        };
        let a = build_transition(e, &dvel, dt);
        assert!(step(&Vec15::zeros()).norm() < 1e-12);
        let f = (rot * dvel / dt).norm();
        for j in 0..15 {
            let h = if j < 6 { 1e-3 } else { 1e-6 };
            let mut xp = Vec15::zeros();
            xp[j] = h;
            let col = (step(&xp) - step(&-xp)) / (2.0 * h);
            for i in 0..15 {
                // the trapezoid rule adds O(dt^2) terms to the position rows
                let tol = if i < VEL { dt * dt * (f + 1.0) } else { 1e-5 };
                assert!((col[i] - a[(i, j)]).abs() < tol, "A[{i},{j}]: {} vs {}", col[i], a[(i, j)]);
            }
        }
    }

    #[test]
    fn process_noise_scaling() {
        let imu = ImuConfig::default();
        let q1 = process_noise(&imu, 0.01);
        let q2 = process_noise(&imu, 0.02);
        for k in 0..3 {
            assert_abs_diff_eq!(q2[(VEL + k, VEL + k)], 4.0 * q1[(VEL + k, VEL + k)], epsilon = 1e-18);
            assert_abs_diff_eq!(q2[(ATT + k, ATT + k)], 2.0 * q1[(ATT + k, ATT + k)], epsilon = 1e-18);
            assert_eq!(q1[(POS + k, POS + k)], 0.0);
        }
        assert_eq!(q1, Mat15::from_diagonal(&q1.diagonal()));
        assert!(is_valid_covariance(&q1));
        let silent = ImuConfig { accel_noise: 0.0, gyro_noise: 0.0, ..imu };
        let q = process_noise(&silent, 0.01);
        assert!(q.fixed_view::<9, 9>(0, 0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn time_update_resets_errors_and_keeps_biases() {
        let mut s = NavErrorState::new(Mat15::identity());
        for i in 0..15 {
            s.x[i] = i as f64 + 1.0;
        }
        let out = time_update(&s, &Mat15::identity(), &Mat15::zeros());
        assert!(out.x.fixed_rows::<9>(0).iter().all(|v| *v == 0.0));
        assert_eq!(out.x.fixed_rows::<6>(9), s.x.fixed_rows::<6>(9));
        assert_eq!(out.p, s.p);
    }

    #[test]
    fn measurement_matrix_entries() {
        let h = measurement_matrix();
        let ones: Vec<(usize, usize)> = (0..6).flat_map(|r| (0..15).map(move |c| (r, c))).filter(|&(r, c)| h[(r, c)] != 0.0).collect();
        assert_eq!(ones, vec![(0, 0), (1, 1), (2, 2), (3, 6), (4, 7), (5, 8)]);
        assert!(h.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn exact_measurement_is_adopted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prior = NavErrorState::new(random_spd(&mut rng, 1.0));
        let z = Vec6::new(1.0, -2.0, 3.0, 0.01, 0.02, -0.03);
        let post = measurement_update(&prior, &VisionMeasurement { z, r: Mat6::identity() * 1e-14 }, &measurement_matrix()).unwrap();
        assert_abs_diff_eq!(post.x.fixed_rows::<3>(POS).into_owned(), z.fixed_rows::<3>(0).into_owned(), epsilon = 1e-9);
        assert_abs_diff_eq!(post.x.fixed_rows::<3>(ATT).into_owned(), z.fixed_rows::<3>(3).into_owned(), epsilon = 1e-9);
    }

    #[test]
    fn equal_weight_fusion_halves_the_gain() {
        let mut p = Mat15::identity() * 4.0;
        let r = Mat6::identity() * 4.0;
        p[(0, 0)] = 4.0;
        let prior = NavErrorState::new(p);
        let h = measurement_matrix();
        let ph = prior.p * h.transpose();
        let k = ph * (h * ph + r).try_inverse().unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(6, 3)], 0.5, epsilon = 1e-15);
        let z = Vec6::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let post = measurement_update(&prior, &VisionMeasurement { z, r }, &h).unwrap();
        assert_abs_diff_eq!(post.x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(post.p[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let prior = NavErrorState::new(Mat15::zeros());
        let meas = VisionMeasurement { z: Vec6::zeros(), r: Mat6::zeros() };
        assert_eq!(measurement_update(&prior, &meas, &measurement_matrix()), Err(FilterError::SingularInnovation));
    }

    #[test]
    fn form_measurement_cases() {
        let nav = NavState { position: Vec3::new(10.0, 20.0, 1000.0), velocity: Vec3::zeros(), rotation: euler_to_dcm(EulerAngles::new(PI - 0.1, 0.1, 0.5)) };
        let same = CameraPose::new(nav.position, dcm_to_euler(&nav.rotation).unwrap());
        let m = form_measurement(&same, &Mat6::identity(), &nav).unwrap();
        assert!(m.z.norm() < 1e-12);
        assert_eq!(m.r, Mat6::identity());

        let level = NavState { rotation: Mat3::identity(), ..nav };
        let att = EulerAngles::new(0.2, -0.1, 0.3);
        let v = CameraPose::new(nav.position + Vec3::new(1.0, 2.0, 3.0), att);
        let m = form_measurement(&v, &Mat6::identity(), &level).unwrap();
        assert_abs_diff_eq!(m.z.fixed_rows::<3>(0).into_owned(), Vec3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(m.z.fixed_rows::<3>(3).into_owned(), att.to_vector(), epsilon = 1e-12);
    }

    #[test]
    fn small_error_angles_add_linearly() {
        let base = EulerAngles::new(0.4, 0.2, -0.3);
        let pert = Vec3::new(0.01, -0.01, 0.01);
        let nav = NavState { position: Vec3::zeros(), velocity: Vec3::zeros(), rotation: euler_to_dcm(base) };
        let vision = CameraPose::new(Vec3::zeros(), EulerAngles::from_vector(&(base.to_vector() + pert)));
        let m = form_measurement(&vision, &Mat6::identity(), &nav).unwrap();
        // D_m D_c^T differs from the angle difference by a base-dependent linear map; at identity base the map is I
        let level = NavState { rotation: Mat3::identity(), ..nav };
        let v0 = CameraPose::new(Vec3::zeros(), EulerAngles::from_vector(&pert));
        let m0 = form_measurement(&v0, &Mat6::identity(), &level).unwrap();
        assert!((m0.z.fixed_rows::<3>(3) - pert).norm() < 1e-12);
        let d = m.z.fixed_rows::<3>(3).into_owned();
        assert!(d.norm() < 0.05 && d.norm() > 0.005);
        // second-order: doubling the perturbation doubles the error angles up to O(1e-4)
        let vision2 = CameraPose::new(Vec3::zeros(), EulerAngles::from_vector(&(base.to_vector() + pert * 2.0)));
        let d2 = form_measurement(&vision2, &Mat6::identity(), &nav).unwrap().z.fixed_rows::<3>(3).into_owned();
        assert!((d2 - d * 2.0).norm() < 1e-3);
        assert!((d2 - d * 2.0).norm() > 1e-7);
    }

    struct Still;

    impl Trajectory for Still {
        fn kinematics(&self, _t: f64) -> Kinematics {
            Kinematics { position: Vec3::new(5.0, 6.0, 700.0), velocity: Vec3::zeros(), rotation: nadir_rotation([0.6, 0.8]) }
        }
    }

    #[test]
    fn correcting_with_the_true_error_restores_truth() {
        let da = EulerAngles::new(0.02, -0.01, 0.03);
        let mut ins = InsTruthAndNav::new(&Still, 0.0, ImuConfig::default(), Vec3::new(30.0, -20.0, 5.0), Vec3::new(1.0, 0.5, -0.2), da);
        let (dp, dv, de) = ins.errors().unwrap();
        let mut state = NavErrorState::new(Mat15::identity());
        state.x.fixed_rows_mut::<3>(POS).copy_from(&dp);
        state.x.fixed_rows_mut::<3>(VEL).copy_from(&dv);
        state.x.fixed_rows_mut::<3>(ATT).copy_from(&de.to_vector());
        state.x[ACCEL_BIAS] = 1e-3;
        apply_correction(&mut ins, &mut state);
        assert!((ins.nav.position - ins.truth.position).norm() < 1e-9);
        assert!((ins.nav.velocity - ins.truth.velocity).norm() < 1e-12);
        assert!((ins.nav.rotation - ins.truth.rotation).norm() < 1e-12);
        assert_eq!(ins.accel_bias_estimate, Vec3::new(1e-3, 0.0, 0.0));
        assert!(state.x.fixed_rows::<9>(0).iter().all(|v| *v == 0.0));

        let before = ins.clone();
        let mut zero = NavErrorState::new(Mat15::identity());
        zero.x.fixed_rows_mut::<3>(ACCEL_BIAS).copy_from(&before.accel_bias_estimate);
        apply_correction(&mut ins, &mut zero);
        assert_eq!(ins, before);
    }

    #[test]
    fn corrected_nav_reforms_a_null_measurement() {
        let mut ins = InsTruthAndNav::new(&Still, 0.0, ImuConfig::default(), Vec3::new(12.0, -8.0, 3.0), Vec3::zeros(), EulerAngles::new(0.01, 0.0, -0.02));
        let vision = CameraPose::new(ins.truth.position + Vec3::new(0.5, 0.0, -0.5), dcm_to_euler(&ins.truth.rotation).unwrap());
        let r = Mat6::identity() * 1e-12;
        let prior = NavErrorState::new(Mat15::identity() * 100.0);
        let meas = form_measurement(&vision, &r, &ins.nav).unwrap();
        let mut post = measurement_update(&prior, &meas, &measurement_matrix()).unwrap();
        apply_correction(&mut ins, &mut post);
        let again = form_measurement(&vision, &r, &ins.nav).unwrap();
        assert!(again.z.norm() < 1e-6, "{}", again.z.norm());
    }

    #[test]
    fn zero_noise_filter_run_stays_on_truth() {
        let imu = ImuConfig { accel_noise: 0.0, gyro_noise: 0.0, accel_bias: [0.0; 3], gyro_bias: [0.0; 3], bias_walk: 0.0 };
        let mut ins = InsTruthAndNav::new(&Still, 0.0, imu, Vec3::zeros(), Vec3::zeros(), EulerAngles::new(0.0, 0.0, 0.0));
        let mut state = NavErrorState::new(Mat15::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let s = ins.propagate(&Still, 0.01, &mut rng);
            let a = build_transition(ins.nav.attitude().unwrap(), &s.dvel, s.dt);
            state = time_update(&state, &a, &process_noise(&imu, s.dt));
        }
        assert_eq!(ins.truth, ins.nav);
        assert!(is_valid_covariance(&state.p));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn joseph_form_matches_short_form_for_optimal_gain(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_spd(&mut rng, 2.0);
            let rr = {
                let m = Mat6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                m * m.transpose() + Mat6::identity() * 0.1
            };
            let h = measurement_matrix();
            let prior = NavErrorState::new(p);
            let post = measurement_update(&prior, &VisionMeasurement { z: Vec6::zeros(), r: rr }, &h).unwrap();
            let k = p * h.transpose() * (h * p * h.transpose() + rr).try_inverse().unwrap();
            let short = (Mat15::identity() - k * h) * p;
            prop_assert!((post.p - short).amax() < 1e-10 * p.amax());
            prop_assert!(is_valid_covariance(&post.p));
        }

        #[test]
        fn time_update_preserves_psd(seed in 0u64..10_000, roll in 2.5..3.8f64, yaw in -3.0..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = NavErrorState::new(random_spd(&mut rng, 1.0));
            let a = build_transition(EulerAngles::new(roll, 0.1, yaw), &Vec3::new(0.01, 0.02, -0.098), 0.01);
            let out = time_update(&state, &a, &process_noise(&ImuConfig::default(), 0.01));
            prop_assert!(is_valid_covariance(&out.p));
        }
    }
}
