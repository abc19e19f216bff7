//! Outlier handling: compatibility pruning followed by GNC-TLS around the
//! certifiable solver.

pub mod bnb;
pub mod compat;
pub mod gnc;

use serde::{Deserialize, Serialize};

pub use bnb::{max_compatible_set, CompatibleSet};
pub use compat::{
    build_violation_sets, shape_bounds, shape_compat, time_compat, CompatibilityBounds, TimePairPolicy,
    ViolationSets,
};
pub use gnc::{gnc_solve, initial_mu, measurement_residuals, tls_weight, GncOutcome, GncSettings};

use crate::error::Result;
use crate::relax::SolverSettings;
use crate::types::{MeasurementSet, ShapeLibrary, SmootherWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub kept: usize,
    pub removed: usize,
    pub violations_shape: usize,
    pub violations_time: usize,
    pub bnb_nodes: u64,
    /// Row-major `(t, i)`; `true` keeps the measurement.
    pub mask: Vec<bool>,
}

/// Compatibility pruning of the active measurements.
///
/// Already-masked cells stay masked and are not counted as removed.
pub fn prune(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    epsilon: f64,
    policy: TimePairPolicy,
) -> Result<PruneReport> {
    let bounds = CompatibilityBounds::new(lib, epsilon)?;
    let violations = build_violation_sets(meas, &bounds, policy)?;
    let set = max_compatible_set(&violations, meas.horizon(), meas.num_keypoints())?;
    let mask: Vec<bool> = set.mask.iter().zip(meas.mask()).map(|(a, b)| *a && *b).collect();
    let kept = mask.iter().filter(|&&m| m).count();
    Ok(PruneReport {
        kept,
        removed: set.removed,
        violations_shape: violations.shape.len(),
        violations_time: violations.time.len(),
        bnb_nodes: set.nodes,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustSettings {
    /// Compatibility tolerance ε, meters.
    pub epsilon: f64,
    pub time_pairs: TimePairPolicy,
    pub gnc: GncSettings,
}

impl Default for RobustSettings {
    fn default() -> Self {
        let gnc = GncSettings::default();
        RobustSettings { epsilon: gnc.noise_bound, time_pairs: TimePairPolicy::default(), gnc }
    }
}

impl RobustSettings {
    /// `ε = ε̄ = 3σ` for isotropic keypoint noise of std `sigma`.
    pub fn for_noise(sigma: f64) -> Self {
        let bound = 3.0 * sigma;
        RobustSettings {
            epsilon: bound,
            gnc: GncSettings { noise_bound: bound, ..GncSettings::default() },
            ..RobustSettings::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobustOutcome {
    pub prune: PruneReport,
    pub gnc: GncOutcome,
}

/// Pruning, then GNC on the surviving measurements.
pub fn solve_robust(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    weights: &SmootherWeights,
    robust: &RobustSettings,
    solver: &SolverSettings,
) -> Result<RobustOutcome> {
    let prune = prune(meas, lib, robust.epsilon, robust.time_pairs)?;
    let pruned = meas.clone().with_mask(prune.mask.clone())?;
    let gnc = gnc_solve(&pruned, lib, weights, &robust.gnc, solver)?;
    Ok(RobustOutcome { prune, gnc })
}
