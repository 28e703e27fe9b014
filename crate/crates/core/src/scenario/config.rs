use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::half_pixel_sigma;
use crate::estimator::SolverConfig;
use crate::guards::GateConfig;
use crate::insekf::trajectory::PathConfig;
use crate::insekf::ImuConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainConfig {
    pub seed: u64,
    /// Map size (m); also the period of the flight tile.
    pub extent: [f64; 2],
    /// Max minus min height (m).
    pub relief: f64,
    /// Grid spacing of the navigation DTM (m).
    pub spacing: f64,
    /// Spacing of the reference terrain the DTM is resampled from (m).
    pub truth_spacing: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self { seed: 7, extent: [3000.0, 3000.0], relief: 300.0, spacing: 30.0, truth_spacing: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Square image side in pixels.
    pub resolution: u32,
    pub fov_deg: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { resolution: 400, fov_deg: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Image noise std (focal units); half a pixel when unset.
    pub sigma_l: Option<f64>,
    /// DTM height noise std (m). When set, the map is the synthetic terrain
    /// sampled at `terrain.spacing` and each feature's ray sees the map
    /// shifted by an independent draw of this std. When unset, the terrain is
    /// synthesized at `terrain.truth_spacing`, the map is that terrain
    /// resampled at `terrain.spacing`, and the std is measured.
    pub sigma_h: Option<f64>,
    /// Probe count for measuring the resampling error.
    pub height_probes: usize,
    /// Fraction of features whose `q2` is replaced by a gross outlier.
    pub outlier_fraction: f64,
    /// Outlier displacement in units of `sigma_l`.
    pub outlier_displacement: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_l: None, sigma_h: None, height_probes: 20_000, outlier_fraction: 0.0, outlier_displacement: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    /// `|p12|` (m).
    pub translation: f64,
    /// Norm of the ego Euler-angle vector (deg).
    pub rotation_deg: f64,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self { translation: 40.0, rotation_deg: 10.0 }
    }
}

/// Half-widths of the uniform initial-guess errors of a Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Per axis of `p1` (m).
    pub position: f64,
    /// Per first-camera Euler angle (deg).
    pub attitude_deg: f64,
    /// Per axis of `p12` (m).
    pub ego_translation: f64,
    /// Per ego Euler angle (deg).
    pub ego_rotation_deg: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { position: 50.0, attitude_deg: 1.0, ego_translation: 2.0, ego_rotation_deg: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightConfig {
    /// Flight altitude above the mean terrain height (m).
    pub height: f64,
    pub speed: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Interval between vision fixes (s).
    pub fix_interval: f64,
    /// Distance flown between the two frames of a fix (m).
    pub baseline: f64,
    pub imu_rate: f64,
    pub path: PathConfig,
    pub init_position_std: f64,
    pub init_velocity_std: f64,
    pub init_attitude_std: f64,
    /// Prior std of the bias states.
    pub accel_bias_std: f64,
    pub gyro_bias_std: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            height: 1000.0,
            speed: 200.0,
            duration: 400.0,
            fix_interval: 15.0,
            baseline: 200.0,
            imu_rate: 100.0,
            path: PathConfig::default(),
            init_position_std: 10.0,
            init_velocity_std: 0.2,
            init_attitude_std: 1e-3,
            accel_bias_std: 5e-3,
            gyro_bias_std: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Monte-Carlo trials per sweep value.
    pub trials: usize,
    /// Monte-Carlo camera height above the terrain below it (m).
    pub height: f64,
    pub features: usize,
    pub terrain: TerrainConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub ego: EgoConfig,
    pub perturbation: PerturbationConfig,
    pub solver: SolverConfig,
    pub gates: GateConfig,
    pub imu: ImuConfig,
    pub flight: FlightConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 150,
            height: 500.0,
            features: 170,
            terrain: TerrainConfig::default(),
            camera: CameraConfig::default(),
            noise: NoiseConfig::default(),
            ego: EgoConfig::default(),
            perturbation: PerturbationConfig::default(),
            solver: SolverConfig::default(),
            gates: GateConfig::default(),
            imu: ImuConfig::default(),
            flight: FlightConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn fov(&self) -> f64 {
        self.camera.fov_deg.to_radians()
    }

    pub fn sigma_l(&self) -> f64 {
        self.noise.sigma_l.unwrap_or_else(|| half_pixel_sigma(self.camera.resolution, self.fov()))
    }

    pub fn sigma_f(&self) -> f64 {
        self.gates.sigma_f.unwrap_or_else(|| self.sigma_l())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every invariant violation, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("height", self.height);
        positive("terrain.extent[0]", self.terrain.extent[0]);
        positive("terrain.extent[1]", self.terrain.extent[1]);
        positive("terrain.spacing", self.terrain.spacing);
        positive("terrain.truth_spacing", self.terrain.truth_spacing);
        positive("camera.fov_deg", self.camera.fov_deg);
        positive("ego.translation", self.ego.translation);
        positive("ego.rotation_deg", self.ego.rotation_deg);
        positive("flight.height", self.flight.height);
        positive("flight.speed", self.flight.speed);
        positive("flight.duration", self.flight.duration);
        positive("flight.fix_interval", self.flight.fix_interval);
        positive("flight.baseline", self.flight.baseline);
        positive("flight.imu_rate", self.flight.imu_rate);
        positive("flight.path.turn_radius", self.flight.path.turn_radius);
        if self.terrain.relief < 0.0 || !self.terrain.relief.is_finite() {
            errs.push(format!("terrain.relief must be non-negative, got {}", self.terrain.relief));
        }
        if let Some(s) = self.noise.sigma_l {
            if !(s >= 0.0 && s.is_finite()) {
                errs.push(format!("noise.sigma_l must be non-negative, got {s}"));
            }
        }
        if let Some(s) = self.noise.sigma_h {
            if !(s >= 0.0 && s.is_finite()) {
                errs.push(format!("noise.sigma_h must be non-negative, got {s}"));
            }
        } else if self.terrain.spacing < self.terrain.truth_spacing {
            errs.push(format!(
                "terrain.spacing ({}) must not be finer than terrain.truth_spacing ({})",
                self.terrain.spacing, self.terrain.truth_spacing
            ));
        }
        if !(0.0..=1.0).contains(&self.noise.outlier_fraction) {
            errs.push(format!("noise.outlier_fraction must lie in [0, 1], got {}", self.noise.outlier_fraction));
        }
        if !(self.noise.outlier_displacement >= 0.0 && self.noise.outlier_displacement.is_finite()) {
            errs.push(format!("noise.outlier_displacement must be non-negative, got {}", self.noise.outlier_displacement));
        }
        if self.camera.resolution < 2 {
            errs.push(format!("camera.resolution must be at least 2, got {}", self.camera.resolution));
        }
        if self.camera.fov_deg >= 180.0 {
            errs.push(format!("camera.fov_deg must be below 180, got {}", self.camera.fov_deg));
        }
        if self.features < crate::estimator::MIN_FEATURES {
            errs.push(format!("features must be at least {}, got {}", crate::estimator::MIN_FEATURES, self.features));
        }
        if self.trials == 0 {
            errs.push("trials must be at least 1".into());
        }
        for (name, v) in [
            ("perturbation.position", self.perturbation.position),
            ("perturbation.attitude_deg", self.perturbation.attitude_deg),
            ("perturbation.ego_translation", self.perturbation.ego_translation),
            ("perturbation.ego_rotation_deg", self.perturbation.ego_rotation_deg),
            ("flight.init_position_std", self.flight.init_position_std),
            ("flight.init_velocity_std", self.flight.init_velocity_std),
            ("flight.init_attitude_std", self.flight.init_attitude_std),
            ("flight.accel_bias_std", self.flight.accel_bias_std),
            ("flight.gyro_bias_std", self.flight.gyro_bias_std),
            ("imu.accel_noise", self.imu.accel_noise),
            ("imu.gyro_noise", self.imu.gyro_noise),
            ("imu.bias_walk", self.imu.bias_walk),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.flight.baseline / self.flight.speed >= self.flight.fix_interval {
            errs.push("flight.baseline / flight.speed must be shorter than flight.fix_interval".into());
        }
        if self.solver.max_iterations == 0 {
            errs.push("solver.max_iterations must be at least 1".into());
        }
        if let Err(e) = self.gates.validate() {
            errs.push(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default_scenario() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.camera.resolution, 400);
        assert_eq!(cfg.height, 500.0);
        assert_eq!(cfg.terrain.extent, [3000.0, 3000.0]);
        assert_eq!(cfg.terrain.relief, 300.0);
        assert_eq!(cfg.terrain.spacing, 30.0);
        assert_eq!(cfg.features, 170);
        assert_eq!(cfg.ego.translation, 40.0);
        assert_eq!(cfg.ego.rotation_deg, 10.0);
        assert_eq!(cfg.trials, 150);
    }

    #[test]
    fn half_pixel_sigma_from_resolution() {
        let cfg = ScenarioConfig::from_toml("[camera]\nresolution = 1000\nfov_deg = 60\n").unwrap();
        let expected = 0.5 * (2.0 * 30f64.to_radians().tan()) / 1000.0;
        assert!((cfg.sigma_l() - expected).abs() < 1e-18);
        assert_eq!(cfg.sigma_f(), cfg.sigma_l());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ScenarioConfig::default();
        cfg.noise.sigma_h = Some(2.0);
        cfg.flight.path.waypoints = vec![[0.0, 0.0], [5000.0, 0.0], [0.0, 5000.0]];
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn lists_every_violation() {
        let err = ScenarioConfig::from_toml("height = -5\nfeatures = 3\n[camera]\nresolution = 1\n").unwrap_err();
        match err {
            ConfigError::Invalid(list) => {
                assert_eq!(list.len(), 3, "{list:?}");
                assert!(list[0].contains("height"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = ScenarioConfig::from_toml("[camera]\nresolution = \"big\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("resolution"), "{msg}");
        let err = ScenarioConfig::from_toml("[camera]\nzoom = 3\n").unwrap_err();
        assert!(err.to_string().contains("zoom"));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_config(Path::new("/nonexistent/dtm.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
