use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::classify::{Backend, TrainOptions, DEFAULT_TIMESTEPS};
use crate::controller::ControllerConfig;
use crate::grasp::{GraspLibrary, DEFAULT_K_MAX};
use crate::scene::Scene;

pub const CONFIG_ENV: &str = "NEUROMANIP_CONFIG";
pub const SEED_ENV: &str = "NEUROMANIP_SEED";

const DEFAULT_SCENE_JSON: &str = include_str!("../../data/default_scene.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSizes {
    pub recordings_per_gesture: usize,
    pub recording_ms: u64,
    /// Training recordings spread their noise evenly over `[0, train_sigma_max]`.
    pub train_sigma_max: f64,
    pub eval_samples: usize,
    pub calibration_samples: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        Self {
            recordings_per_gesture: 20,
            recording_ms: 5000,
            train_sigma_max: 1.5,
            eval_samples: 6000,
            calibration_samples: 6000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub target_acc: f64,
    pub tol: f64,
    pub sigma_max: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { target_acc: 0.83, tol: 0.02, sigma_max: 3.0, max_iterations: 30 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scene: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSizes,
    /// Evaluation noise level; `calibrate` writes the fitted value here.
    pub noise_sigma: f64,
    pub mains_amp: f64,
    pub timesteps: usize,
    pub k_max: usize,
    pub backend: Backend,
    pub controller: ControllerConfig,
    pub training: TrainOptions,
    pub calibration: CalibrationSettings,
    pub latency_budget_us: f64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: DatasetSizes::default(),
            noise_sigma: 0.984375,
            mains_amp: 0.2,
            timesteps: DEFAULT_TIMESTEPS,
            k_max: DEFAULT_K_MAX,
            backend: Backend::Dense,
            controller: ControllerConfig::default(),
            training: TrainOptions::default(),
            calibration: CalibrationSettings::default(),
            latency_budget_us: 5000.0,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_owned()));
        let d = &self.dataset;
        if d.recordings_per_gesture == 0 || d.eval_samples == 0 || d.calibration_samples == 0 {
            return bad("dataset sizes must be positive");
        }
        if d.recording_ms < 1500 {
            return bad("dataset.recording_ms must be >= 1500");
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("mains_amp", self.mains_amp),
            ("dataset.train_sigma_max", d.train_sigma_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if self.timesteps == 0 {
            return bad("timesteps must be >= 1");
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1");
        }
        let c = &self.calibration;
        if !(0.0..=1.0).contains(&c.target_acc) || !(c.tol > 0.0) || !(c.sigma_max > 0.0) {
            return bad("calibration settings out of range");
        }
        if !(self.latency_budget_us > 0.0) {
            return bad("latency_budget_us must be > 0");
        }
        if self.training.epochs == 0 || self.training.batch_size == 0 || !(self.training.learning_rate > 0.0) {
            return bad("training options must be positive");
        }
        self.controller.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.scene, &mut cfg.paths.library, &mut cfg.paths.model, &mut cfg.paths.data_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `explicit`, else `$NEUROMANIP_CONFIG`, else defaults; then `$NEUROMANIP_SEED`.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, HarnessError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut cfg = match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::load(&p)?,
            None => Self::default(),
        };
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed =
                s.trim().parse().map_err(|_| HarnessError::Config(format!("{SEED_ENV}={s:?} is not an integer")))?;
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene, HarnessError> {
        Ok(match &self.paths.scene {
            Some(p) => Scene::load(p)?,
            None => default_scene(),
        })
    }

    pub fn library(&self) -> Result<GraspLibrary, HarnessError> {
        let lib = match &self.paths.library {
            Some(p) => GraspLibrary::load(p)?,
            None => GraspLibrary::default_library(),
        };
        Ok(lib.with_k_max(self.k_max)?)
    }
}

/// The bundled six-object desk scene.
pub fn default_scene() -> Scene {
    Scene::from_json(DEFAULT_SCENE_JSON).expect("bundled scene is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 3, "dataset": {"eval_samples": 60}}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dataset.eval_samples, 60);
        assert_eq!(cfg.dataset.recording_ms, 5000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"sede": 3}"#), Err(HarnessError::Config(_))));
        assert!(RunConfig::from_json(r#"{"dataset": {"size": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"k_max": 0}"#).is_err());
    }

    #[test]
    fn bundled_scene_loads() {
        let s = default_scene();
        assert_eq!(s.objects.len(), 6);
    }
}
