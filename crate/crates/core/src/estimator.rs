//! Terrain-constrained pose and ego-motion estimation.
//!
//! Each correspondence `(q1, q2)` is tied to the terrain through the ground
//! point `G_E` hit by the first camera's ray and the tangent plane normal `N`
//! there. For parameters `theta` the per-feature constraint is
//!
//! ```text
//! c2G = p12 + R12 * L * (G_E - p1),   L = q1 N^T / (N^T R1 q1)
//! f   = P(q2, q2) * c2G / |c2G|
//! ```
//!
//! which vanishes when the second camera's ray through `q2` passes through the
//! point where the first ray meets the tangent plane.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{
    euler_to_dcm, oblique_lift, project, CameraPose, EulerAngles, FeatureObservation, FlowVector, GeometryError,
    Mat3, ParamVector, Vec3,
};
use crate::terrain::{DtmGrid, GroundPoint, TerrainError};
use crate::uncertainty::feature_param_jacobian;

pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec12 = SVector<f64, 12>;

/// Minimum number of correspondences for a non-singular 12-parameter fix.
pub const MIN_FEATURES: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("feature {feature}: {source}")]
    Trace { feature: usize, source: TerrainError },
    #[error("feature maps to the second camera centre (|c2G| = 0)")]
    DegenerateResidual,
    #[error("need at least {MIN_FEATURES} features, got {0}")]
    TooFewFeatures(usize),
    #[error("weighted normal matrix is singular")]
    Singular,
    #[error("stacked translation system has rank {rank} < 6")]
    RankDeficient { rank: usize },
    #[error("no convergence after {} iterations", .0.iterations)]
    NotConverged(Box<PoseSolution>),
}

/// Source of ground points for rays from the first camera.
pub trait GroundModel: Sync {
    /// Traces the ray of feature `feature`.
    fn trace(&self, feature: usize, origin: &Vec3, direction: &Vec3) -> Result<GroundPoint, TerrainError>;
}

impl GroundModel for DtmGrid {
    fn trace(&self, _feature: usize, origin: &Vec3, direction: &Vec3) -> Result<GroundPoint, TerrainError> {
        self.ray_intersect(origin, direction)
    }
}

/// A map whose height error at feature `i` is the constant `offsets[i]`.
/// Features without an offset see the unmodified grid.
#[derive(Debug, Clone)]
pub struct OffsetDtm<'a> {
    grid: &'a DtmGrid,
    offsets: Vec<f64>,
}

impl<'a> OffsetDtm<'a> {
    pub fn new(grid: &'a DtmGrid, offsets: Vec<f64>) -> Self {
        Self { grid, offsets }
    }

    /// Independent zero-mean Gaussian offsets with std `sigma_h`.
    pub fn gaussian(grid: &'a DtmGrid, n: usize, sigma_h: f64, seed: u64) -> Self {
        let normal = Normal::new(0.0, sigma_h.max(0.0)).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(grid, (0..n).map(|_| normal.sample(&mut rng)).collect())
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

impl GroundModel for OffsetDtm<'_> {
    fn trace(&self, feature: usize, origin: &Vec3, direction: &Vec3) -> Result<GroundPoint, TerrainError> {
        let offset = self.offsets.get(feature).copied().unwrap_or(0.0);
        self.grid.ray_intersect_offset(origin, direction, offset)
    }
}

/// Rotations and translations unpacked from a parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frames {
    pub att1: EulerAngles,
    pub att12: EulerAngles,
    pub p1: Vec3,
    pub r1: Mat3,
    pub p12: Vec3,
    pub r12: Mat3,
}

impl Frames {
    pub fn new(params: &ParamVector) -> Self {
        Self {
            att1: params.attitude(),
            att12: params.ego_rotation(),
            p1: params.position(),
            r1: euler_to_dcm(params.attitude()),
            p12: params.translation(),
            r12: euler_to_dcm(params.ego_rotation()),
        }
    }
}

/// Intermediate quantities of one feature's constraint.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FeatureTerms {
    pub lift: Mat3,
    /// `G_E - p1`
    pub offset: Vec3,
    /// `c2G`
    pub c2g: Vec3,
    pub c2g_norm: f64,
    /// `P(q2, q2)`
    pub proj_q2: Mat3,
}

impl FeatureTerms {
    pub fn new(frames: &Frames, obs: &FeatureObservation) -> Result<Self, EstimatorError> {
        let lift = oblique_lift(&obs.q1, &frames.r1, &obs.ground.normal)?;
        let offset = obs.ground.position - frames.p1;
        let c2g = frames.p12 + frames.r12 * (lift * offset);
        let c2g_norm = c2g.norm();
        if !(c2g_norm > 0.0) {
            return Err(EstimatorError::DegenerateResidual);
        }
        Ok(Self { lift, offset, c2g, c2g_norm, proj_q2: project(&obs.q2, &obs.q2)? })
    }

    pub fn residual(&self) -> Vec3 {
        self.proj_q2 * self.c2g / self.c2g_norm
    }

    /// `d residual / d c2G`.
    pub fn normalized_projector(&self) -> Result<Mat3, GeometryError> {
        Ok(self.proj_q2 * project(&self.c2g, &self.c2g)? / self.c2g_norm)
    }
}

/// Normalized residual `f_i`.
pub fn residual(params: &ParamVector, obs: &FeatureObservation) -> Result<Vec3, EstimatorError> {
    Ok(FeatureTerms::new(&Frames::new(params), obs)?.residual())
}

/// Unnormalized constraint `P(q2, q2) * c2G`.
pub fn constraint(params: &ParamVector, obs: &FeatureObservation) -> Result<Vec3, EstimatorError> {
    let t = FeatureTerms::new(&Frames::new(params), obs)?;
    Ok(t.proj_q2 * t.c2g)
}

/// Ground point for `q1` seen from `guess`.
pub fn estimate_ground_point<G: GroundModel + ?Sized>(
    guess: &CameraPose,
    q1: &Vec3,
    feature: usize,
    ground: &G,
) -> Result<GroundPoint, EstimatorError> {
    ground
        .trace(feature, &guess.position, &(guess.rotation() * q1))
        .map_err(|source| EstimatorError::Trace { feature, source })
}

/// Traces every first-frame ray from `guess`.
pub fn trace_observations<G: GroundModel + ?Sized>(
    guess: &CameraPose,
    flow: &[FlowVector],
    ground: &G,
) -> Result<Vec<FeatureObservation>, EstimatorError> {
    let r1 = guess.rotation();
    flow.iter()
        .enumerate()
        .map(|(i, f)| {
            let gp = ground
                .trace(i, &guess.position, &(r1 * f.q1))
                .map_err(|source| EstimatorError::Trace { feature: i, source })?;
            Ok(FeatureObservation { q1: f.q1, q2: f.q2, ground: gp })
        })
        .collect()
}

/// Linear system `A [p12; p1] = B`, three rows per feature, holding the
/// rotations in `params` fixed.
pub fn stack_system(params: &ParamVector, observations: &[FeatureObservation]) -> Result<(DMatrix<f64>, DVector<f64>), EstimatorError> {
    let frames = Frames::new(params);
    let n = observations.len();
    let mut a = DMatrix::zeros(3 * n, 6);
    let mut b = DVector::zeros(3 * n);
    for (i, obs) in observations.iter().enumerate() {
        let pq = project(&obs.q2, &obs.q2)?;
        let lift = oblique_lift(&obs.q1, &frames.r1, &obs.ground.normal)?;
        let m = pq * frames.r12 * lift;
        a.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&pq);
        a.fixed_view_mut::<3, 3>(3 * i, 3).copy_from(&(-m));
        b.fixed_rows_mut::<3>(3 * i).copy_from(&(-m * obs.ground.position));
    }
    Ok((a, b))
}

const RANK_TOLERANCE: f64 = 1e-10;

fn numerical_rank(singular_values: &DVector<f64>) -> usize {
    let max = singular_values.max();
    singular_values.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Least-squares `(p12, p1)` from a stacked system.
pub fn solve_linear_translation(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(Vec3, Vec3), EstimatorError> {
    if a.nrows() < 6 {
        return Err(EstimatorError::RankDeficient { rank: a.nrows() });
    }
    let svd = a.clone().svd(true, true);
    let rank = numerical_rank(&svd.singular_values);
    if rank < 6 {
        return Err(EstimatorError::RankDeficient { rank });
    }
    let x = svd.solve(b, 0.0).map_err(|_| EstimatorError::Singular)?;
    Ok((Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5])))
}

/// Rotation-only residual `(I - A A^+) B` for angles
/// `[roll1, pitch1, yaw1, roll12, pitch12, yaw12]`.
pub fn rotation_residual(rotations: &[f64; 6], observations: &[FeatureObservation]) -> Result<DVector<f64>, EstimatorError> {
    let pose = CameraPose::new(Vec3::zeros(), EulerAngles::new(rotations[0], rotations[1], rotations[2]));
    let ego = crate::camgeom::EgoMotion::new(Vec3::zeros(), EulerAngles::new(rotations[3], rotations[4], rotations[5]));
    let (a, b) = stack_system(&ParamVector::from_parts(&pose, &ego), observations)?;
    let (p12, p1) = solve_linear_translation(&a, &b)?;
    let mut x = DVector::zeros(6);
    x.fixed_rows_mut::<3>(0).copy_from(&p12);
    x.fixed_rows_mut::<3>(3).copy_from(&p1);
    Ok(b - a * x)
}

/// Geman-McClure weight `1 / (1 + x^2)^2`.
pub fn gm_weight(x: f64) -> f64 {
    let d = 1.0 + x * x;
    1.0 / (d * d)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-feature IRLS weights scaled by the median residual norm. All weights
/// are 1 when the median is zero.
pub fn compute_weights(residual_norms: &[f64]) -> Vec<f64> {
    let med = median(residual_norms);
    if !(med > 0.0) {
        return vec![1.0; residual_norms.len()];
    }
    residual_norms.iter().map(|r| gm_weight(r / med)).collect()
}

/// Diagonal of the `3n x 3n` weight matrix.
pub fn weight_diagonal(weights: &[f64]) -> DVector<f64> {
    DVector::from_iterator(3 * weights.len(), weights.iter().flat_map(|&w| [w, w, w]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub gn_stall_window: usize,
    pub lm_initial_damping: f64,
    pub irls_enabled: bool,
    /// An accepted damped step that lowers the cost by less than this
    /// fraction also ends the iteration. The ray-traced residual is only
    /// piecewise smooth across DTM cell edges, so a minimum can sit on a kink
    /// where steps stop shrinking.
    pub cost_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 50, step_tolerance: 1e-8, gn_stall_window: 5, lm_initial_damping: 1e-3, irls_enabled: true, cost_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub params: ParamVector,
    /// Observations traced from the solution's first pose.
    pub observations: Vec<FeatureObservation>,
    pub residuals: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sum w_i |f_i|^2` at the solution.
    pub cost: f64,
}

struct Evaluation {
    observations: Vec<FeatureObservation>,
    residuals: Vec<Vec3>,
    jacobians: Vec<SMatrix<f64, 3, 12>>,
}

fn evaluate<G: GroundModel + ?Sized>(params: &ParamVector, flow: &[FlowVector], ground: &G) -> Result<Evaluation, EstimatorError> {
    let observations = trace_observations(&params.pose(), flow, ground)?;
    let frames = Frames::new(params);
    let mut residuals = Vec::with_capacity(flow.len());
    let mut jacobians = Vec::with_capacity(flow.len());
    for obs in &observations {
        let terms = FeatureTerms::new(&frames, obs)?;
        residuals.push(terms.residual());
        jacobians.push(feature_param_jacobian(&frames, &terms)?);
    }
    Ok(Evaluation { observations, residuals, jacobians })
}

fn weighted_cost(residuals: &[Vec3], weights: &[f64]) -> f64 {
    residuals.iter().zip(weights).map(|(r, w)| w * r.norm_squared()).sum()
}

fn irls_weights(residuals: &[Vec3], enabled: bool) -> Vec<f64> {
    if enabled {
        compute_weights(&residuals.iter().map(|r| r.norm()).collect::<Vec<_>>())
    } else {
        vec![1.0; residuals.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    GaussNewton,
    LevenbergMarquardt,
}

/// Robust 12-parameter fix from `flow` against `ground`, starting at `initial`.
pub fn solve_pose<G: GroundModel + ?Sized>(
    initial: &ParamVector,
    flow: &[FlowVector],
    ground: &G,
    cfg: &SolverConfig,
) -> Result<PoseSolution, EstimatorError> {
    if flow.len() < MIN_FEATURES {
        return Err(EstimatorError::TooFewFeatures(flow.len()));
    }
    let mut theta = *initial;
    let mut current = evaluate(&theta, flow, ground)?;
    let mut weights = irls_weights(&current.residuals, cfg.irls_enabled);
    let mut mode = Mode::GaussNewton;
    let mut lambda = cfg.lm_initial_damping;
    let mut best_cost = f64::INFINITY;
    let mut stall = 0usize;
    let mut converged = false;
    let mut flat = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let cost = weighted_cost(&current.residuals, &weights);
        let mut h = Mat12::zeros();
        let mut g = Vec12::zeros();
        for ((j, r), w) in current.jacobians.iter().zip(&current.residuals).zip(&weights) {
            h += *w * j.transpose() * j;
            g += *w * j.transpose() * r;
        }
        let mut lhs = h;
        if mode == Mode::LevenbergMarquardt {
            for k in 0..12 {
                lhs[(k, k)] += lambda * h[(k, k)];
            }
        }
        let step = -lhs.cholesky().ok_or(EstimatorError::Singular)?.solve(&g);
        if !step.iter().all(|x| x.is_finite()) {
            return Err(EstimatorError::Singular);
        }
        let step_norm = step.norm();
        let candidate = ParamVector(theta.0 + step);

        let accepted = match (mode, evaluate(&candidate, flow, ground)) {
            (Mode::GaussNewton, Ok(eval)) => {
                let new_cost = weighted_cost(&eval.residuals, &weights);
                best_cost = best_cost.min(cost);
                if new_cost < best_cost {
                    stall = 0;
                } else {
                    stall += 1;
                }
                theta = candidate;
                current = eval;
                if stall >= cfg.gn_stall_window {
                    // weights stay frozen from here on
                    mode = Mode::LevenbergMarquardt;
                } else {
                    weights = irls_weights(&current.residuals, cfg.irls_enabled);
                }
                true
            }
            (Mode::LevenbergMarquardt, Ok(eval)) => {
                let new_cost = weighted_cost(&eval.residuals, &weights);
                if new_cost < cost {
                    flat = cost - new_cost < cfg.cost_tolerance * cost;
                    lambda /= 10.0;
                    theta = candidate;
                    current = eval;
                    true
                } else {
                    lambda *= 10.0;
                    false
                }
            }
            (_, Err(_)) => {
                if mode == Mode::LevenbergMarquardt {
                    lambda *= 10.0;
                }
                mode = Mode::LevenbergMarquardt;
                false
            }
        };
        if (step_norm < cfg.step_tolerance && (accepted || mode == Mode::LevenbergMarquardt)) || flat {
            converged = true;
            break;
        }
    }

    let cost = weighted_cost(&current.residuals, &weights);
    let solution = PoseSolution {
        params: theta,
        observations: current.observations,
        residuals: current.residuals,
        weights,
        iterations,
        converged,
        cost,
    };
    if converged {
        Ok(solution)
    } else {
        Err(EstimatorError::NotConverged(Box::new(solution)))
    }
}
