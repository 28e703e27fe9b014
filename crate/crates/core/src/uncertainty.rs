//! First-order uncertainty of a fix.
//!
//! The data are the noisy second-frame rays `q2` and the ray-traced ground
//! points `G_E`; `q1` and `N` are treated as exact. Errors propagate through
//! the weighted normal equations to the twelve parameters and from there to
//! the second camera pose.

use nalgebra::{DMatrix, Matrix6, SMatrix};
use thiserror::Error;

use crate::camgeom::{
    dcm_to_euler_gradients, euler_to_dcm, euler_to_dcm_partials, FeatureObservation, GeometryError, Mat3, ParamVector,
    Vec3,
};
use crate::estimator::{EstimatorError, FeatureTerms, Frames, Mat12};

pub type Mat3x12 = SMatrix<f64, 3, 12>;
pub type Mat6x12 = SMatrix<f64, 6, 12>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("weighted normal matrix is singular")]
    Singular,
    #[error("{expected} weights expected, got {found}")]
    WeightCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Image-plane std of each `q2` component (focal units).
    pub sigma_l: f64,
    /// DTM height std (meters).
    pub sigma_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCovariance {
    pub full: Mat12,
    /// Position then attitude of the second camera.
    pub second_frame: Matrix6<f64>,
}

pub(crate) fn feature_param_jacobian(frames: &Frames, terms: &FeatureTerms) -> Result<Mat3x12, EstimatorError> {
    let np = terms.normalized_projector()?;
    let r1_partials = euler_to_dcm_partials(frames.att1);
    let r12_partials = euler_to_dcm_partials(frames.att12);
    let depth_vec = terms.lift * terms.offset;
    let np_r12_l = np * frames.r12 * terms.lift;
    let mut j = Mat3x12::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-np_r12_l));
    for k in 0..3 {
        let col = -np_r12_l * (r1_partials[k] * depth_vec);
        j.fixed_view_mut::<3, 1>(0, 3 + k).copy_from(&col);
        let col = np * (r12_partials[k] * depth_vec);
        j.fixed_view_mut::<3, 1>(0, 9 + k).copy_from(&col);
    }
    j.fixed_view_mut::<3, 3>(0, 6).copy_from(&np);
    Ok(j)
}

/// Per-feature `(df/dq2, df/dG_E)`.
pub(crate) fn feature_data_jacobians(frames: &Frames, obs: &FeatureObservation, terms: &FeatureTerms) -> Result<(Mat3, Mat3), EstimatorError> {
    let q2 = obs.q2;
    let v = terms.c2g;
    let dq = -(Mat3::identity() * q2.dot(&v) + q2 * v.transpose()) * terms.proj_q2 / (q2.norm_squared() * terms.c2g_norm);
    let dg = terms.normalized_projector()? * frames.r12 * terms.lift;
    Ok((dq, dg))
}

/// `3n x 12` Jacobian of the stacked residuals with the ground points held
/// fixed, columns in parameter order.
pub fn jacobian_params(params: &ParamVector, observations: &[FeatureObservation]) -> Result<DMatrix<f64>, UncertaintyError> {
    let frames = Frames::new(params);
    let mut j = DMatrix::zeros(3 * observations.len(), 12);
    for (i, obs) in observations.iter().enumerate() {
        let terms = FeatureTerms::new(&frames, obs)?;
        j.fixed_view_mut::<3, 12>(3 * i, 0).copy_from(&feature_param_jacobian(&frames, &terms)?);
    }
    Ok(j)
}

/// Block-diagonal `(J_q, J_G)`, each `3n x 3n`.
pub fn jacobian_data(params: &ParamVector, observations: &[FeatureObservation]) -> Result<(DMatrix<f64>, DMatrix<f64>), UncertaintyError> {
    let frames = Frames::new(params);
    let n = observations.len();
    let mut jq = DMatrix::zeros(3 * n, 3 * n);
    let mut jg = DMatrix::zeros(3 * n, 3 * n);
    for (i, obs) in observations.iter().enumerate() {
        let terms = FeatureTerms::new(&frames, obs)?;
        let (dq, dg) = feature_data_jacobians(&frames, obs, &terms)?;
        jq.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&dq);
        jg.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&dg);
    }
    Ok((jq, jg))
}

/// Covariance of one image ray: `sigma_l^2 diag(1, 1, 0)`.
pub fn image_covariance(sigma_l: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(sigma_l * sigma_l, sigma_l * sigma_l, 0.0))
}

/// Covariance of a ray-traced ground point whose map height has std
/// `sigma_h`: the error slides along the ray `R1 q1`.
pub fn ground_covariance(q1: &Vec3, r1: &Mat3, normal: &Vec3, sigma_h: f64) -> Result<Mat3, GeometryError> {
    let ray = r1 * q1;
    let den = normal.dot(&ray);
    if den == 0.0 || !den.is_finite() {
        return Err(GeometryError::GrazingRay(den));
    }
    Ok(ray * ray.transpose() * (sigma_h * sigma_h / (den * den)))
}

/// Per-feature data covariance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCovariance {
    pub image: Vec<Mat3>,
    pub ground: Vec<Mat3>,
}

impl DataCovariance {
    /// Dense `6n x 6n` `blockdiag(Sigma_q, Sigma_G)`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.image.len();
        let mut m = DMatrix::zeros(6 * n, 6 * n);
        for (i, (q, g)) in self.image.iter().zip(&self.ground).enumerate() {
            m.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(q);
            m.fixed_view_mut::<3, 3>(3 * (n + i), 3 * (n + i)).copy_from(g);
        }
        m
    }
}

pub fn data_covariance(params: &ParamVector, observations: &[FeatureObservation], noise: &NoiseModel) -> Result<DataCovariance, UncertaintyError> {
    let r1 = euler_to_dcm(params.attitude());
    let image = vec![image_covariance(noise.sigma_l); observations.len()];
    let ground = observations
        .iter()
        .map(|o| ground_covariance(&o.q1, &r1, &o.ground.normal, noise.sigma_h))
        .collect::<Result<_, _>>()?;
    Ok(DataCovariance { image, ground })
}

fn symmetrize_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let trace = sym.trace();
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= 0.0) {
        return sym;
    }
    let floor = -1e-9 * trace.abs();
    let clipped = eig.eigenvalues.map(|e| if e < floor { 0.0 } else { e.max(0.0) });
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&r + r.transpose()) * 0.5
}

/// Symmetrizes and clips negative eigenvalues.
pub fn enforce_psd<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let d = DMatrix::from_column_slice(N, N, m.as_slice());
    SMatrix::from_column_slice(symmetrize_psd(&d).as_slice())
}

/// Dense `Sigma_theta = JT (J_D Sigma_D J_D^T) JT^T`,
/// `JT = (J^T W J)^-1 J^T W`, `J_D = [J_q J_G]`. `w` is the diagonal of `W`.
pub fn param_covariance(
    j_theta: &DMatrix<f64>,
    j_q: &DMatrix<f64>,
    j_g: &DMatrix<f64>,
    sigma_d: &DMatrix<f64>,
    w: &nalgebra::DVector<f64>,
) -> Result<Mat12, UncertaintyError> {
    let rows = j_theta.nrows();
    if w.len() != rows {
        return Err(UncertaintyError::WeightCount { expected: rows, found: w.len() });
    }
    let jtw = j_theta.transpose() * DMatrix::from_diagonal(w);
    let h = &jtw * j_theta;
    let h_inv = h.try_inverse().ok_or(UncertaintyError::Singular)?;
    let jt = h_inv * jtw;
    let mut jd = DMatrix::zeros(rows, j_q.ncols() + j_g.ncols());
    jd.columns_mut(0, j_q.ncols()).copy_from(j_q);
    jd.columns_mut(j_q.ncols(), j_g.ncols()).copy_from(j_g);
    let s = &jd * sigma_d * jd.transpose();
    let cov = &jt * s * jt.transpose();
    Ok(Mat12::from_column_slice(symmetrize_psd(&cov).as_slice()))
}

/// Blockwise `Sigma_theta` for per-feature weights `w_i`.
pub fn pose_covariance(
    params: &ParamVector,
    observations: &[FeatureObservation],
    noise: &NoiseModel,
    weights: &[f64],
) -> Result<Mat12, UncertaintyError> {
    if weights.len() != observations.len() {
        return Err(UncertaintyError::WeightCount { expected: observations.len(), found: weights.len() });
    }
    let frames = Frames::new(params);
    let sq = image_covariance(noise.sigma_l);
    let mut h = Mat12::zeros();
    let mut middle = Mat12::zeros();
    for (obs, &w) in observations.iter().zip(weights) {
        let terms = FeatureTerms::new(&frames, obs)?;
        let j = feature_param_jacobian(&frames, &terms)?;
        let (dq, dg) = feature_data_jacobians(&frames, obs, &terms)?;
        let sg = ground_covariance(&obs.q1, &frames.r1, &obs.ground.normal, noise.sigma_h)?;
        let s = dq * sq * dq.transpose() + dg * sg * dg.transpose();
        h += w * j.transpose() * j;
        middle += (w * w) * j.transpose() * s * j;
    }
    let h_inv = h.try_inverse().ok_or(UncertaintyError::Singular)?;
    Ok(enforce_psd(&(h_inv * middle * h_inv)))
}

/// Jacobian of the second pose `(p2, roll2, pitch2, yaw2)` with respect to
/// the twelve parameters.
pub fn second_pose_jacobian(params: &ParamVector) -> Result<Mat6x12, UncertaintyError> {
    let r1 = euler_to_dcm(params.attitude());
    let r12 = euler_to_dcm(params.ego_rotation());
    let r2 = r1 * r12.transpose();
    let p12 = params.translation();
    let grads = dcm_to_euler_gradients(&r2)?;
    let d1 = euler_to_dcm_partials(params.attitude());
    let d12 = euler_to_dcm_partials(params.ego_rotation());
    let angle_row = |dr: &Mat3| Vec3::new(grads[0].dot(dr), grads[1].dot(dr), grads[2].dot(dr));

    let mut j = Mat6x12::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    j.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-r2));
    for k in 0..3 {
        let dr2 = d1[k] * r12.transpose();
        j.fixed_view_mut::<3, 1>(0, 3 + k).copy_from(&(-dr2 * p12));
        j.fixed_view_mut::<3, 1>(3, 3 + k).copy_from(&angle_row(&dr2));
        let dr2 = r1 * d12[k].transpose();
        j.fixed_view_mut::<3, 1>(0, 9 + k).copy_from(&(-dr2 * p12));
        j.fixed_view_mut::<3, 1>(3, 9 + k).copy_from(&angle_row(&dr2));
    }
    Ok(j)
}

/// `J_C2 Sigma_theta J_C2^T`, the measurement noise of a vision fix.
pub fn second_pose_covariance(sigma_theta: &Mat12, params: &ParamVector) -> Result<Matrix6<f64>, UncertaintyError> {
    let j = second_pose_jacobian(params)?;
    Ok(enforce_psd(&(j * sigma_theta * j.transpose())))
}

/// `Sigma_theta` and `Sigma_C2` together.
pub fn pose_and_second_frame(
    params: &ParamVector,
    observations: &[FeatureObservation],
    noise: &NoiseModel,
    weights: &[f64],
) -> Result<PoseCovariance, UncertaintyError> {
    let full = pose_covariance(params, observations, noise, weights)?;
    Ok(PoseCovariance { second_frame: second_pose_covariance(&full, params)?, full })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::{compose_second_pose, generate_observations, CameraPose, EgoMotion, EulerAngles};
    use crate::estimator::{residual, trace_observations, weight_diagonal};
    use crate::terrain::synth_terrain;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fixture(seed: u64, n: usize) -> (ParamVector, Vec<FeatureObservation>) {
        let terrain = synth_terrain(21, [3000.0, 3000.0], 300.0, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rng.gen_range(1200.0..1800.0);
        let y = rng.gen_range(1200.0..1800.0);
        let h = terrain.sample_height(x, y).unwrap();
        let pose = CameraPose::new(
            Vec3::new(x, y, h + 500.0),
            EulerAngles::new(PI + rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), rng.gen_range(-3.0..3.0)),
        );
        let ego = EgoMotion::new(
            Vec3::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), rng.gen_range(-10.0..10.0)),
            EulerAngles::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
        );
        let syn = generate_observations(&pose, &ego, &terrain, n, 1.0, 1e-3, seed).unwrap();
        let theta = ParamVector::from_parts(&pose, &ego);
        let obs = trace_observations(&pose, &syn.flow, &terrain).unwrap();
        // evaluate away from the exact solution
        let mut off = theta;
        off.0[0] += 3.0;
        off.0[10] += 0.004;
        (off, obs)
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn param_jacobian_matches_differences() {
        for seed in 0..10 {
            let (theta, obs) = fixture(seed, 10);
            let j = jacobian_params(&theta, &obs).unwrap();
            for k in 0..12 {
                let h = if k < 3 || (6..9).contains(&k) { 1e-4 } else { 1e-6 };
                let mut a = theta;
                let mut b = theta;
                a.0[k] += h;
                b.0[k] -= h;
                let fd = DMatrix::from_iterator(
                    3 * obs.len(),
                    1,
                    obs.iter().flat_map(|o| ((residual(&a, o).unwrap() - residual(&b, o).unwrap()) / (2.0 * h)).data.0[0]),
                );
                let col = DMatrix::from_column_slice(3 * obs.len(), 1, j.column(k).as_slice());
                assert!(rel_err(&col, &fd) < 1e-5, "seed {seed} column {k}: {}", rel_err(&col, &fd));
            }
        }
    }

    #[test]
    fn translation_block_and_ground_block() {
        let (theta, obs) = fixture(3, 5);
        let j = jacobian_params(&theta, &obs).unwrap();
        let (_, jg) = jacobian_data(&theta, &obs).unwrap();
        let frames = Frames::new(&theta);
        for (i, o) in obs.iter().enumerate() {
            let t = FeatureTerms::new(&frames, o).unwrap();
            let np = t.proj_q2 * crate::camgeom::project(&t.c2g, &t.c2g).unwrap() / t.c2g_norm;
            assert_eq!(j.fixed_view::<3, 3>(3 * i, 6).into_owned(), np);
            let dg = jg.fixed_view::<3, 3>(3 * i, 3 * i).into_owned();
            let dp1 = j.fixed_view::<3, 3>(3 * i, 0).into_owned();
            assert_abs_diff_eq!(dg, -dp1, epsilon = 1e-15);
            let row = o.q2.transpose() * j.fixed_view::<3, 12>(3 * i, 0);
            assert!(row.norm() < 1e-12 * (1.0 + j.norm()));
        }
    }

    #[test]
    fn data_jacobians_match_differences() {
        let (theta, obs) = fixture(5, 6);
        let (jq, jg) = jacobian_data(&theta, &obs).unwrap();
        let h = 1e-6;
        for (i, o) in obs.iter().enumerate() {
            for k in 0..3 {
                let mut a = *o;
                let mut b = *o;
                a.q2[k] += h;
                b.q2[k] -= h;
                let fd = (residual(&theta, &a).unwrap() - residual(&theta, &b).unwrap()) / (2.0 * h);
                let an = jq.fixed_view::<3, 1>(3 * i, 3 * i + k).into_owned();
                assert!((an - fd).norm() < 1e-5 * fd.norm().max(1e-3));
                let hg = 1e-3;
                let mut a = *o;
                let mut b = *o;
                a.ground.position[k] += hg;
                b.ground.position[k] -= hg;
                let fd = (residual(&theta, &a).unwrap() - residual(&theta, &b).unwrap()) / (2.0 * hg);
                let an = jg.fixed_view::<3, 1>(3 * i, 3 * i + k).into_owned();
                assert!((an - fd).norm() < 1e-5 * fd.norm().max(1e-6));
            }
        }
        for r in 0..jq.nrows() {
            for c in 0..jq.ncols() {
                if r / 3 != c / 3 {
                    assert_eq!(jq[(r, c)], 0.0);
                    assert_eq!(jg[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn ground_covariance_structure() {
        let s = ground_covariance(&Vec3::z(), &euler_to_dcm(EulerAngles::new(PI, 0.0, 0.0)), &Vec3::z(), 2.0).unwrap();
        assert_abs_diff_eq!(s, Mat3::from_diagonal(&Vec3::new(0.0, 0.0, 4.0)), epsilon = 1e-12);
        let q1 = Vec3::new(0.2, -0.1, 1.0);
        let r1 = euler_to_dcm(EulerAngles::new(PI - 0.1, 0.05, 0.3));
        let n = Vec3::new(0.3, -0.2, 1.0);
        let s = ground_covariance(&q1, &r1, &n, 1.5).unwrap();
        let den = n.dot(&(r1 * q1));
        assert_abs_diff_eq!(s.trace(), 2.25 * q1.norm_squared() / (den * den), epsilon = 1e-12);
        let ev = s.symmetric_eigen().eigenvalues;
        assert_eq!(ev.iter().filter(|e| e.abs() > 1e-12).count(), 1);
    }

    #[test]
    fn ground_covariance_matches_height_perturbation() {
        use rand_distr::{Distribution, Normal};
        let rows: Vec<Vec<f64>> = (0..51).map(|r| (0..51).map(|c| 0.2 * c as f64 - 0.1 * r as f64 + 40.0).collect()).collect();
        let g = crate::terrain::DtmGrid::build(&rows, 30.0, [0.0, 0.0], false).unwrap();
        let pose = CameraPose::new(Vec3::new(700.0, 800.0, 600.0), EulerAngles::new(PI - 0.2, 0.1, 0.7));
        let q1 = Vec3::new(0.15, 0.1, 1.0);
        let dir = pose.rotation() * q1;
        let base = g.ray_intersect(&pose.position, &dir).unwrap();
        let normal = Normal::new(0.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<Vec3> = (0..10_000)
            .map(|_| g.ray_intersect_offset(&pose.position, &dir, normal.sample(&mut rng)).unwrap().position)
            .collect();
        let mean = samples.iter().sum::<Vec3>() / samples.len() as f64;
        let cov = samples.iter().map(|s| (s - mean) * (s - mean).transpose()).sum::<Mat3>() / (samples.len() - 1) as f64;
        let predicted = ground_covariance(&q1, &pose.rotation(), &base.normal, 3.0).unwrap();
        for k in 0..3 {
            let ratio = cov[(k, k)] / predicted[(k, k)];
            assert!((0.9..1.1).contains(&ratio), "axis {k}: ratio {ratio}");
        }
    }

    #[test]
    fn dense_and_blockwise_covariances_agree() {
        let (theta, obs) = fixture(8, 12);
        let noise = NoiseModel { sigma_l: 1e-3, sigma_h: 2.0 };
        let j = jacobian_params(&theta, &obs).unwrap();
        let (jq, jg) = jacobian_data(&theta, &obs).unwrap();
        let sd = data_covariance(&theta, &obs, &noise).unwrap().to_dense();
        let weights: Vec<f64> = (0..obs.len()).map(|i| 0.2 + 0.06 * i as f64).collect();
        let dense = param_covariance(&j, &jq, &jg, &sd, &weight_diagonal(&weights)).unwrap();
        let block = pose_covariance(&theta, &obs, &noise, &weights).unwrap();
        assert!((dense - block).norm() < 1e-9 * block.norm());

        // W = I is the unweighted formula
        let ident = param_covariance(&j, &jq, &jg, &sd, &DVector::from_element(3 * obs.len(), 1.0)).unwrap();
        let h_inv = (j.transpose() * &j).try_inverse().unwrap();
        let mut jd = DMatrix::zeros(j.nrows(), 6 * obs.len());
        jd.columns_mut(0, 3 * obs.len()).copy_from(&jq);
        jd.columns_mut(3 * obs.len(), 3 * obs.len()).copy_from(&jg);
        let plain = &h_inv * j.transpose() * &jd * &sd * jd.transpose() * &j * &h_inv;
        assert!((DMatrix::from_column_slice(12, 12, ident.as_slice()) - plain).norm() < 1e-9 * ident.norm());

        let scaled = param_covariance(&j, &jq, &jg, &(&sd * 4.0), &weight_diagonal(&weights)).unwrap();
        assert!((scaled - dense * 4.0).norm() < 1e-9 * scaled.norm());
    }

    #[test]
    fn second_pose_jacobian_matches_differences() {
        for seed in 0..20 {
            let (theta, _) = fixture(seed, 8);
            let j = second_pose_jacobian(&theta).unwrap();
            let c2 = |p: &ParamVector| {
                let pose = compose_second_pose(&p.pose(), &p.ego()).unwrap();
                nalgebra::Vector6::new(
                    pose.position.x,
                    pose.position.y,
                    pose.position.z,
                    pose.attitude.roll,
                    pose.attitude.pitch,
                    pose.attitude.yaw,
                )
            };
            let mut fd = Mat6x12::zeros();
            for k in 0..12 {
                let h = 1e-6;
                let mut a = theta;
                let mut b = theta;
                a.0[k] += h;
                b.0[k] -= h;
                fd.set_column(k, &((c2(&a) - c2(&b)) / (2.0 * h)));
            }
            assert!((j - fd).norm() / fd.norm() < 1e-5);
        }
    }

    #[test]
    fn second_pose_jacobian_at_identity_ego() {
        let pose = CameraPose::new(Vec3::new(1.0, 2.0, 3.0), EulerAngles::new(PI - 0.1, 0.2, 0.4));
        let theta = ParamVector::from_parts(&pose, &EgoMotion::default());
        let j = second_pose_jacobian(&theta).unwrap();
        assert_eq!(j.fixed_view::<3, 3>(0, 0).into_owned(), Mat3::identity());
        assert_abs_diff_eq!(j.fixed_view::<3, 3>(0, 6).into_owned(), -pose.rotation(), epsilon = 1e-15);
        let s = Mat12::from_diagonal_element(1e-4) + Mat12::from_fn(|r, c| 1e-6 * ((r + c) as f64).cos());
        let c2 = second_pose_covariance(&enforce_psd(&s), &theta).unwrap();
        assert_abs_diff_eq!(c2, c2.transpose(), epsilon = 1e-18);
        assert!(c2.symmetric_eigen().eigenvalues.min() >= -1e-9 * c2.trace());
    }

    #[test]
    fn psd_enforcement() {
        let m = nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, -1e-14, 0.0, 0.0, 0.0, 2.0);
        let p = enforce_psd(&m);
        assert!(p.symmetric_eigen().eigenvalues.min() >= 0.0);
        let m = nalgebra::Matrix2::new(1.0, 1e-13, 0.0, 1.0);
        let p = enforce_psd(&m);
        assert_eq!(p, p.transpose());
    }
}
