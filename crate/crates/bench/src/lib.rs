//! Shared fixtures for the benchmarks in `benches/`.

use cast_core::simulate::{NoiseConfig, Scenario, ScenarioConfig};
use cast_core::ShapeLibrary;

/// A bundled-library instance at 5%-of-length keypoint noise.
pub fn instance(horizon: usize, outlier_ratio: f64, seed: u64) -> Scenario {
    let config = ScenarioConfig { horizon, ..ScenarioConfig::default() };
    let noise = NoiseConfig { outlier_ratio, rng_seed: seed, ..NoiseConfig::default() };
    Scenario::generate(&config, &ShapeLibrary::bundled(), &noise).expect("default scenario is valid")
}
