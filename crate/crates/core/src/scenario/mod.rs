//! Scenario configuration, Monte-Carlo sweeps, closed-loop flights and
//! report files.

pub mod config;
pub mod flight;
pub mod montecarlo;
pub mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camgeom::{compose_second_pose, FlowVector, GeometryError, ParamVector, Vec3};
use crate::estimator::{trace_observations, EstimatorError, GroundModel, OffsetDtm, PoseSolution};
use crate::guards::{
    check_conditioning, check_degeneracy, check_initial_state, check_outlier_gate, count_outliers, FixDeltas, FixGeometry,
    GateConfig, GateReport,
};
use crate::insekf::trajectory::PathError;
use crate::insekf::Mat15;
use crate::terrain::{height_error_std, resample_grid, synth_terrain, synth_terrain_tile, DtmGrid, GroundPoint, TerrainError};
use crate::uncertainty::{jacobian_params, PoseCovariance, UncertaintyError};

pub use config::{load_config, ConfigError, ScenarioConfig};
pub use flight::{run_flight, run_flight_with, FixOverride, FixRecord, FixStatus, FlightSample, TrajectoryLog};
pub use montecarlo::{run_monte_carlo, MetricsRow, MetricsTable, SweepParam};
pub use report::{emit_report, Report, ReportError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("terrain: {0}")]
    Terrain(#[from] TerrainError),
    #[error("flight path: {0}")]
    Path(#[from] PathError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("covariance: {0}")]
    Uncertainty(#[from] UncertaintyError),
    #[error("unknown sweep parameter `{0}` (expected features, resolution, grid_spacing, relief or translation_magnitude)")]
    UnknownSweep(String),
    #[error("sweep value {value} is not valid for {param}")]
    BadSweepValue { param: String, value: f64 },
    #[error("map of {extent:?} m leaves no room for a {margin:.0} m viewing margin")]
    MapTooSmall { extent: [f64; 2], margin: f64 },
    #[error("could not place trial {0} over the map")]
    Placement(usize),
}

/// Seeded stream `stream` of the master seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reference terrain that generates the imagery and the map the estimator
/// navigates on.
#[derive(Debug, Clone)]
pub struct World {
    pub truth: DtmGrid,
    pub map: DtmGrid,
    /// DTM height error std (m).
    pub sigma_h: f64,
    /// Height errors are injected per feature rather than coming from
    /// resampling.
    pub injected: bool,
}

impl World {
    /// Bounded terrain for single-fix trials.
    pub fn bounded(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        Self::build(cfg, false)
    }

    /// Periodic tile for flights longer than the terrain extent.
    pub fn tiled(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        Self::build(cfg, true)
    }

    fn build(cfg: &ScenarioConfig, periodic: bool) -> Result<Self, ScenarioError> {
        let t = &cfg.terrain;
        let synth = if periodic { synth_terrain_tile } else { synth_terrain };
        match cfg.noise.sigma_h {
            Some(sigma_h) => {
                let truth = synth(t.seed, t.extent, t.relief, t.spacing)?;
                Ok(Self { map: truth.clone(), truth, sigma_h, injected: true })
            }
            None => {
                let truth = synth(t.seed, t.extent, t.relief, t.truth_spacing)?;
                let map = resample_grid(&truth, t.spacing)?;
                let sigma_h = height_error_std(&truth, &map, cfg.noise.height_probes, t.seed ^ 0x5eed)?;
                Ok(Self { truth, map, sigma_h, injected: false })
            }
        }
    }

    /// Ground model for one fix of `n` features; `seed` draws the injected
    /// height errors.
    pub fn ground(&self, n: usize, seed: u64) -> Ground<'_> {
        if self.injected {
            Ground::Offset(OffsetDtm::gaussian(&self.map, n, self.sigma_h, seed))
        } else {
            Ground::Map(&self.map)
        }
    }
}

pub enum Ground<'a> {
    Map(&'a DtmGrid),
    Offset(OffsetDtm<'a>),
}

impl GroundModel for Ground<'_> {
    fn trace(&self, feature: usize, origin: &Vec3, direction: &Vec3) -> Result<GroundPoint, TerrainError> {
        match self {
            Ground::Map(g) => g.trace(feature, origin, direction),
            Ground::Offset(g) => g.trace(feature, origin, direction),
        }
    }
}

/// Everything the gates need about one fix.
pub struct FixContext<'a, G: GroundModel + ?Sized> {
    pub initial: &'a ParamVector,
    pub flow: &'a [FlowVector],
    pub ground: &'a G,
    pub solution: &'a PoseSolution,
    pub covariance: &'a PoseCovariance,
    pub p_minus: &'a Mat15,
    pub geometry: FixGeometry,
    pub sigma_f: f64,
}

fn second_pose_parts(params: &ParamVector) -> Result<(Vec3, Vec3), GeometryError> {
    let c2 = compose_second_pose(&params.pose(), &params.ego())?;
    Ok((c2.position, c2.attitude.to_vector()))
}

/// Runs every gate in order: outliers, conditioning, degeneracy, initial
/// state.
pub fn gate_fix<G: GroundModel + ?Sized>(ctx: &FixContext<'_, G>, cfg: &GateConfig) -> Result<GateReport, ScenarioError> {
    let sol = ctx.solution;
    let n = ctx.flow.len();
    let n_initial = match trace_observations(&ctx.initial.pose(), ctx.flow, ctx.ground) {
        Ok(obs) => count_outliers(ctx.initial, &obs, ctx.sigma_f),
        Err(_) => n,
    };
    let n_final = count_outliers(&sol.params, &sol.observations, ctx.sigma_f);
    let mut checks = check_outlier_gate(n_initial, n_final, n, cfg);
    let j = jacobian_params(&sol.params, &sol.observations)?;
    checks.push(check_conditioning(&j, &sol.weights, cfg));
    checks.extend(check_degeneracy(&ctx.covariance.second_frame, &ctx.covariance.full, &ctx.geometry, cfg));
    let (p_init, a_init) = second_pose_parts(ctx.initial)?;
    let (p_fin, a_fin) = second_pose_parts(&sol.params)?;
    let deltas = FixDeltas::between((&p_init, &a_init), (&p_fin, &a_fin), ctx.initial, &sol.params);
    checks.extend(check_initial_state(ctx.p_minus, &ctx.covariance.second_frame, &deltas, &ctx.geometry, cfg));
    Ok(GateReport::new(checks))
}
