//! Frames, rotations, projection operators and synthetic two-view flow.
//!
//! A pose maps camera coordinates to world coordinates:
//! `world = R * cam + p`. The camera looks along its `+z` axis and images are
//! on the unit-focal plane, so every image ray has `z == 1`. Relative motion
//! maps first-camera coordinates to second-camera ones:
//! `cam2 = R12 * cam1 + p12`.
//!
//! All rotations, camera attitude included, use one Euler convention:
//! `R = Phi(roll) * Theta(pitch) * Psi(yaw)` with the elementary matrices of
//! [`euler_to_dcm`].

use nalgebra::{Matrix3, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::terrain::{DtmGrid, GroundPoint, TerrainError};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// `|R(1,3)|` at or above this is treated as gimbal lock.
pub const GIMBAL_LOCK_LIMIT: f64 = 1.0 - 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("gimbal lock: |R(1,3)| = {0}")]
    GimbalLock(f64),
    #[error("projection undefined: s^T u = {0}")]
    DegenerateProjection(f64),
    #[error("ray is parallel to the tangent plane (N^T R1 q1 = {0})")]
    GrazingRay(f64),
    #[error("point is at or behind the camera plane (depth {0})")]
    BehindCamera(f64),
    #[error("only {found} of {wanted} co-visible features found")]
    InsufficientCoverage { found: usize, wanted: usize },
    #[error("field of view must lie in (0, pi), got {0}")]
    InvalidFov(f64),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

/// Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn to_vector(self) -> Vec3 {
        Vec3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn dcm(self) -> Mat3 {
        euler_to_dcm(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub attitude: EulerAngles,
}

impl CameraPose {
    pub fn new(position: Vec3, attitude: EulerAngles) -> Self {
        Self { position, attitude }
    }

    pub fn rotation(&self) -> Mat3 {
        euler_to_dcm(self.attitude)
    }

    pub fn world_to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation().transpose() * (world - self.position)
    }
}

/// Relative motion between two camera frames: `cam2 = R12 * cam1 + p12`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoMotion {
    pub translation: Vec3,
    pub rotation: EulerAngles,
}

impl EgoMotion {
    pub fn new(translation: Vec3, rotation: EulerAngles) -> Self {
        Self { translation, rotation }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        euler_to_dcm(self.rotation)
    }
}

/// The twelve estimated parameters in fixed order:
/// `p1 (3), roll1, pitch1, yaw1, p12 (3), roll12, pitch12, yaw12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector(pub SVector<f64, 12>);

impl ParamVector {
    pub const P1: usize = 0;
    pub const ATT1: usize = 3;
    pub const P12: usize = 6;
    pub const ATT12: usize = 9;

    pub fn from_parts(pose: &CameraPose, ego: &EgoMotion) -> Self {
        let mut v = SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<3>(Self::P1).copy_from(&pose.position);
        v.fixed_rows_mut::<3>(Self::ATT1).copy_from(&pose.attitude.to_vector());
        v.fixed_rows_mut::<3>(Self::P12).copy_from(&ego.translation);
        v.fixed_rows_mut::<3>(Self::ATT12).copy_from(&ego.rotation.to_vector());
        Self(v)
    }

    pub fn position(&self) -> Vec3 {
        self.0.fixed_rows::<3>(Self::P1).into_owned()
    }

    pub fn attitude(&self) -> EulerAngles {
        EulerAngles::from_vector(&self.0.fixed_rows::<3>(Self::ATT1).into_owned())
    }

    pub fn translation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(Self::P12).into_owned()
    }

    pub fn ego_rotation(&self) -> EulerAngles {
        EulerAngles::from_vector(&self.0.fixed_rows::<3>(Self::ATT12).into_owned())
    }

    pub fn pose(&self) -> CameraPose {
        CameraPose::new(self.position(), self.attitude())
    }

    pub fn ego(&self) -> EgoMotion {
        EgoMotion::new(self.translation(), self.ego_rotation())
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn psi_dcm(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

fn theta_dcm(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

fn phi_dcm(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

fn psi_dcm_d(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(-s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn theta_dcm_d(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(-s, 0.0, -c, 0.0, 0.0, 0.0, c, 0.0, -s)
}

fn phi_dcm_d(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    Mat3::new(0.0, 0.0, 0.0, 0.0, -s, c, 0.0, -c, -s)
}

/// `Phi(roll) * Theta(pitch) * Psi(yaw)`.
pub fn euler_to_dcm(e: EulerAngles) -> Mat3 {
    phi_dcm(e.roll) * theta_dcm(e.pitch) * psi_dcm(e.yaw)
}

/// Partial derivatives of [`euler_to_dcm`] with respect to roll, pitch, yaw.
pub fn euler_to_dcm_partials(e: EulerAngles) -> [Mat3; 3] {
    let (f, t, p) = (phi_dcm(e.roll), theta_dcm(e.pitch), psi_dcm(e.yaw));
    [
        phi_dcm_d(e.roll) * t * p,
        f * theta_dcm_d(e.pitch) * p,
        f * t * psi_dcm_d(e.yaw),
    ]
}

/// Inverse of [`euler_to_dcm`] with quadrant-aware arctangents; pitch is in
/// `[-pi/2, pi/2]`, roll and yaw in `(-pi, pi]`.
pub fn dcm_to_euler(r: &Mat3) -> Result<EulerAngles, GeometryError> {
    let r13 = r[(0, 2)];
    if r13.abs() >= GIMBAL_LOCK_LIMIT {
        return Err(GeometryError::GimbalLock(r13.abs()));
    }
    Ok(EulerAngles {
        roll: r[(1, 2)].atan2(r[(2, 2)]),
        pitch: (-r13).asin(),
        yaw: r[(0, 1)].atan2(r[(0, 0)]),
    })
}

/// Gradient of each extracted angle with respect to the nine entries of `R`,
/// returned as three matrices `dangle/dR(i,j)`.
pub fn dcm_to_euler_gradients(r: &Mat3) -> Result<[Mat3; 3], GeometryError> {
    let r13 = r[(0, 2)];
    if r13.abs() >= GIMBAL_LOCK_LIMIT {
        return Err(GeometryError::GimbalLock(r13.abs()));
    }
    let mut d_roll = Mat3::zeros();
    let den = r[(1, 2)].powi(2) + r[(2, 2)].powi(2);
    d_roll[(1, 2)] = r[(2, 2)] / den;
    d_roll[(2, 2)] = -r[(1, 2)] / den;
    let mut d_pitch = Mat3::zeros();
    d_pitch[(0, 2)] = -1.0 / (1.0 - r13 * r13).sqrt();
    let mut d_yaw = Mat3::zeros();
    let den = r[(0, 0)].powi(2) + r[(0, 1)].powi(2);
    d_yaw[(0, 1)] = r[(0, 0)] / den;
    d_yaw[(0, 0)] = -r[(0, 1)] / den;
    Ok([d_roll, d_pitch, d_yaw])
}

/// Oblique projector `I - u s^T / (s^T u)`: annihilates `u`, range orthogonal
/// to `s`.
pub fn project(u: &Vec3, s: &Vec3) -> Result<Mat3, GeometryError> {
    let den = s.dot(u);
    if den == 0.0 || !den.is_finite() {
        return Err(GeometryError::DegenerateProjection(den));
    }
    Ok(Mat3::identity() - u * s.transpose() / den)
}

/// `q1 N^T / (N^T R1 q1)`: maps a world displacement from the camera to the
/// depth-scaled first-camera ray meeting the plane with normal `N`.
pub fn oblique_lift(q1: &Vec3, r1: &Mat3, normal: &Vec3) -> Result<Mat3, GeometryError> {
    let den = normal.dot(&(r1 * q1));
    if den == 0.0 || !den.is_finite() {
        return Err(GeometryError::GrazingRay(den));
    }
    Ok(q1 * normal.transpose() / den)
}

/// Unit-focal image ray of world point `g`.
pub fn pinhole_project(pose: &CameraPose, g: &Vec3) -> Result<Vec3, GeometryError> {
    let c = pose.world_to_camera(g);
    if !(c.z > 0.0) {
        return Err(GeometryError::BehindCamera(c.z));
    }
    Ok(c / c.z)
}

/// Second pose from the first and the ego-motion:
/// `p2 = p1 - R1 R12^T p12`, `R2 = R1 R12^T`.
pub fn compose_second_pose(pose1: &CameraPose, ego: &EgoMotion) -> Result<CameraPose, GeometryError> {
    let r1 = pose1.rotation();
    let r12 = ego.rotation_matrix();
    let r2 = r1 * r12.transpose();
    Ok(CameraPose {
        position: pose1.position - r2 * ego.translation,
        attitude: dcm_to_euler(&r2)?,
    })
}

/// Ego-motion taking `pose1` to `pose2` (inverse of [`compose_second_pose`]).
pub fn relative_motion(pose1: &CameraPose, pose2: &CameraPose) -> Result<EgoMotion, GeometryError> {
    let r1 = pose1.rotation();
    let r2 = pose2.rotation();
    let r12 = r2.transpose() * r1;
    Ok(EgoMotion {
        translation: r2.transpose() * (pose1.position - pose2.position),
        rotation: dcm_to_euler(&r12)?,
    })
}

/// Epipolar triple product `q2^T (p12 x R12 q1)`.
pub fn epipolar_residual(q1: &Vec3, q2: &Vec3, r12: &Mat3, p12: &Vec3) -> f64 {
    q2.dot(&p12.cross(&(r12 * q1)))
}

/// Image-plane standard deviation of a half-pixel error for a square
/// `resolution x resolution` sensor spanning `fov` radians.
pub fn half_pixel_sigma(resolution: u32, fov: f64) -> f64 {
    0.5 * (2.0 * (0.5 * fov).tan() / f64::from(resolution))
}

/// A correspondence between the two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub q1: Vec3,
    pub q2: Vec3,
}

/// A correspondence together with the ground point traced from the first
/// camera's estimated pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureObservation {
    pub q1: Vec3,
    pub q2: Vec3,
    pub ground: GroundPoint,
}

impl FeatureObservation {
    pub fn flow(&self) -> FlowVector {
        FlowVector { q1: self.q1, q2: self.q2 }
    }
}

/// Synthetic optical flow plus the ground points it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFlow {
    pub flow: Vec<FlowVector>,
    pub ground_truth: Vec<Vec3>,
}

/// Draws `n` ground features visible from both frames. Rays are cast through
/// image points uniform over the square `|x|, |y| <= tan(fov/2)` of the first
/// camera; `q1` is exact and `q2` is the true reprojection plus isotropic
/// Gaussian noise of std `sigma_l` on its x and y components. The noise comes
/// from its own stream, so the feature set depends only on `seed`.
pub fn generate_observations(
    pose1: &CameraPose,
    ego: &EgoMotion,
    terrain: &DtmGrid,
    n: usize,
    fov: f64,
    sigma_l: f64,
    seed: u64,
) -> Result<SyntheticFlow, GeometryError> {
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return Err(GeometryError::InvalidFov(fov));
    }
    let pose2 = compose_second_pose(pose1, ego)?;
    let half = (0.5 * fov).tan();
    let r1 = pose1.rotation();
    let noise = Normal::new(0.0, sigma_l.max(0.0)).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flow = Vec::with_capacity(n);
    let mut ground_truth = Vec::with_capacity(n);
    let max_attempts = 50 * n.max(1);
    let mut attempts = 0;
    while flow.len() < n && attempts < max_attempts {
        attempts += 1;
        let q1 = Vec3::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half), 1.0);
        let Ok(gp) = terrain.ray_intersect(&pose1.position, &(r1 * q1)) else {
            continue;
        };
        let Ok(q2_true) = pinhole_project(&pose2, &gp.position) else {
            continue;
        };
        if q2_true.x.abs() > half || q2_true.y.abs() > half {
            continue;
        }
        flow.push(FlowVector { q1, q2: q2_true });
        ground_truth.push(gp.position);
    }
    if flow.len() < n {
        return Err(GeometryError::InsufficientCoverage { found: flow.len(), wanted: n });
    }
    if sigma_l > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for f in &mut flow {
            f.q2.x += noise.sample(&mut noise_rng);
            f.q2.y += noise.sample(&mut noise_rng);
        }
    }
    Ok(SyntheticFlow { flow, ground_truth })
}
