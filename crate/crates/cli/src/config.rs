//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;

use cast_core::relax::SolverSettings;
use cast_core::simulate::{NoiseConfig, ScenarioConfig};
use cast_core::SmootherWeights;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Base std of the process noise scaled by the process-noise sweep.
pub const PROCESS_NOISE_BASE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Keypoint noise std as a fraction of the characteristic length.
    MeasurementNoise,
    /// Multiplier on the velocity and rotation-rate noise base.
    ProcessNoise,
    OutlierRatio,
}

impl SweepAxis {
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::MeasurementNoise => vec![0.01, 0.025, 0.05, 0.075, 0.1],
            SweepAxis::ProcessNoise => vec![1.0, 2.0, 5.0, 10.0],
            SweepAxis::OutlierRatio => (0..=6).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unsmoothed {
    U,
}

/// A smoothed horizon length, or `"U"` for no velocity or rotation smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Frames(usize),
    Unsmoothed(Unsmoothed),
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Frames(t) => write!(f, "{t}"),
            Horizon::Unsmoothed(_) => f.write_str("U"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `ω_t = 1`.
    #[default]
    Unit,
    /// `ω_t = 1 / velocity_sigma²`.
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub horizons: Vec<Horizon>,
    /// Frames used by the unsmoothed variant.
    pub unsmoothed_horizon: usize,
    pub weight_mode: WeightMode,
    /// Rotation-rate smoothing weight κ.
    pub rotation_weight: f64,
    /// Shape prior weight λ.
    pub shape_weight: f64,
    /// Compatibility and GNC bound; `3 · measurement_sigma` when absent.
    pub epsilon: Option<f64>,
    pub solver: SolverSettings,
    pub seed: u64,
    pub workers: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            noise: NoiseConfig::default(),
            sweep: SweepAxis::MeasurementNoise,
            values: SweepAxis::MeasurementNoise.default_values(),
            trials: 50,
            horizons: vec![Horizon::Frames(8)],
            unsmoothed_horizon: 12,
            weight_mode: WeightMode::Unit,
            rotation_weight: 1.0,
            shape_weight: 0.1,
            epsilon: None,
            solver: SolverSettings::default(),
            seed: 0,
            workers: 1,
            output: None,
        }
    }
}

/// One `(sweep value, horizon)` combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Position of `value` in the sweep; trials at the same index share seeds.
    pub value_index: usize,
    pub value: f64,
    pub horizon: Horizon,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.values.is_empty() || self.horizons.is_empty() {
            return fail("need at least one sweep value and one horizon".into());
        }
        for &v in &self.values {
            let ok = match self.sweep {
                SweepAxis::OutlierRatio => (0.0..1.0).contains(&v),
                _ => v.is_finite() && v >= 0.0,
            };
            if !ok {
                return fail(format!("sweep value {v} out of range for {:?}", self.sweep));
            }
        }
        for h in &self.horizons {
            if let Horizon::Frames(t) = h {
                if *t < 2 {
                    return fail(format!("horizon {t} is shorter than 2 frames"));
                }
            }
        }
        if self.unsmoothed_horizon < 2 {
            return fail("unsmoothed horizon must be at least 2".into());
        }
        if !(self.rotation_weight >= 0.0 && self.shape_weight >= 0.0) {
            return fail("smoothing weights must be ≥ 0".into());
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return fail("epsilon must be positive".into());
            }
        }
        self.scenario.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    /// Sweep points ordered by value, then by horizon.
    pub fn points(&self) -> Vec<SweepPoint> {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(value_index, &value)| {
                self.horizons.iter().map(move |&horizon| SweepPoint { value_index, value, horizon })
            })
            .collect()
    }

    pub fn frames(&self, horizon: Horizon) -> usize {
        match horizon {
            Horizon::Frames(t) => t,
            Horizon::Unsmoothed(_) => self.unsmoothed_horizon,
        }
    }

    /// Noise model at a sweep value, with the trial seed.
    pub fn noise_at(&self, value: f64, seed: u64) -> NoiseConfig {
        let mut noise = NoiseConfig { rng_seed: seed, ..self.noise.clone() };
        match self.sweep {
            SweepAxis::MeasurementNoise => noise.measurement_sigma = value * self.scenario.characteristic_length,
            SweepAxis::ProcessNoise => {
                noise.velocity_sigma = value * PROCESS_NOISE_BASE;
                noise.rotation_rate_sigma = value * PROCESS_NOISE_BASE;
            }
            SweepAxis::OutlierRatio => noise.outlier_ratio = value,
        }
        noise
    }

    pub fn smoother_weights(&self, horizon: Horizon, noise: &NoiseConfig) -> Result<SmootherWeights> {
        let frames = self.frames(horizon);
        if let Horizon::Unsmoothed(_) = horizon {
            return Ok(SmootherWeights::unsmoothed(frames, self.shape_weight));
        }
        let omega = match self.weight_mode {
            WeightMode::Unit => 1.0,
            WeightMode::InverseVariance => {
                if !(noise.velocity_sigma > 0.0) {
                    return Err(CliError::Config("inverse-variance weights need velocity_sigma > 0".into()));
                }
                1.0 / (noise.velocity_sigma * noise.velocity_sigma)
            }
        };
        Ok(SmootherWeights::uniform(frames, omega, self.rotation_weight, self.shape_weight))
    }

    pub fn epsilon_for(&self, noise: &NoiseConfig) -> f64 {
        self.epsilon.unwrap_or(3.0 * noise.measurement_sigma)
    }
}
