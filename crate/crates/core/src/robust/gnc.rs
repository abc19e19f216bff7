//! Graduated non-convexity with a truncated-least-squares loss around the
//! certifiable solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::{solve_cast, CastEstimate, SolverSettings};
use crate::types::{MeasurementSet, ShapeLibrary, SmootherWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GncSettings {
    /// Inlier residual bound ε̄, meters.
    pub noise_bound: f64,
    pub max_iterations: usize,
    pub mu_factor: f64,
    pub weight_tolerance: f64,
}

impl Default for GncSettings {
    fn default() -> Self {
        GncSettings {
            noise_bound: 0.03,
            max_iterations: 20,
            mu_factor: 1.4,
            weight_tolerance: 1e-6,
        }
    }
}

/// `μ₀ = ε̄² / (2 r_max² − ε̄²)`, at least `1e-6`; infinite when every
/// residual is already inside the inlier band.
pub fn initial_mu(max_residual: f64, noise_bound: f64) -> f64 {
    let (r2, e2) = (max_residual * max_residual, noise_bound * noise_bound);
    let denom = 2.0 * r2 - e2;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        (e2 / denom).max(1e-6)
    }
}

/// TLS weight for residual `r` at control parameter `μ`.
pub fn tls_weight(residual: f64, mu: f64, noise_bound: f64) -> f64 {
    let (r2, e2) = (residual * residual, noise_bound * noise_bound);
    if !mu.is_finite() || r2 <= mu / (mu + 1.0) * e2 {
        1.0
    } else if r2 >= (mu + 1.0) / mu * e2 {
        0.0
    } else {
        (noise_bound * (mu * (mu + 1.0)).sqrt() / residual - mu).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct GncOutcome {
    pub estimate: CastEstimate,
    /// Row-major `(t, i)` weights; masked cells are 0.
    pub weights: Vec<f64>,
    /// Number of relaxation solves.
    pub iterations: usize,
    /// Set when a later solve failed and an earlier estimate is returned.
    pub degraded: bool,
}

/// Per-measurement residuals `‖y − R B_i c − p‖` of an estimate.
pub fn measurement_residuals(estimate: &CastEstimate, meas: &MeasurementSet, lib: &ShapeLibrary) -> Vec<f64> {
    let c = estimate.shape.as_vector();
    let mut out = Vec::with_capacity(meas.len());
    for (t, state) in estimate.trajectory.states.iter().enumerate() {
        for i in 0..meas.num_keypoints() {
            let predicted = state.rotation * (lib.block(i) * c) + state.position;
            out.push((meas.point(t, i) - predicted).norm());
        }
    }
    out
}

/// Alternates weighted certifiable solves with TLS weight updates.
///
/// Only the measurement terms are reweighted; the smoothing and shape
/// priors keep their weights.
pub fn gnc_solve(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    weights: &SmootherWeights,
    gnc: &GncSettings,
    solver: &SolverSettings,
) -> Result<GncOutcome> {
    if !(gnc.noise_bound > 0.0) || !(gnc.mu_factor > 1.0) || gnc.max_iterations == 0 {
        return Err(Error::InvalidInput("GNC needs ε̄ > 0, μ factor > 1 and at least one iteration".into()));
    }
    let cells = meas.len();
    let mut w: Vec<f64> = (0..cells).map(|k| if meas.mask()[k] { 1.0 } else { 0.0 }).collect();
    let mut mu = f64::NAN;
    let mut best: Option<CastEstimate> = None;
    let mut used = w.clone();
    let mut iterations = 0;
    let mut settle = false;

    loop {
        let folded: Vec<f64> = meas.weights().iter().zip(&w).map(|(a, b)| a * b).collect();
        iterations += 1;
        let estimate = match solve_cast(&meas.clone().with_weights(folded)?, lib, weights, solver) {
            Ok(e) => e,
            Err(e) => match best {
                Some(estimate) => {
                    log::warn!("GNC solve {iterations} failed ({e}); returning the previous estimate");
                    return Ok(GncOutcome { estimate, weights: used, iterations, degraded: true });
                }
                None => return Err(e),
            },
        };
        used = w.clone();
        let residuals = measurement_residuals(&estimate, meas, lib);
        best = Some(estimate);
        if settle || iterations >= gnc.max_iterations {
            break;
        }

        if mu.is_nan() {
            let r_max = (0..cells).filter(|&k| meas.mask()[k]).map(|k| residuals[k]).fold(0.0, f64::max);
            mu = initial_mu(r_max, gnc.noise_bound);
        }
        let next: Vec<f64> = (0..cells)
            .map(|k| if meas.mask()[k] { tls_weight(residuals[k], mu, gnc.noise_bound) } else { 0.0 })
            .collect();
        let change = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if change < gnc.weight_tolerance {
            break;
        }
        // Binary weights: one last solve so the estimate matches them.
        settle = w.iter().all(|&x| x == 0.0 || x == 1.0);
        mu *= gnc.mu_factor;
    }
    let estimate = best.expect("at least one solve ran");
    Ok(GncOutcome { estimate, weights: used, iterations, degraded: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{NoiseConfig, Scenario, ScenarioConfig};

    #[test]
    fn tls_update_examples() {
        assert!((tls_weight(1.0, 1.0, 1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(tls_weight(0.1, 1.0, 1.0), 1.0);
        assert_eq!(tls_weight(10.0, 1.0, 1.0), 0.0);
        assert_eq!(tls_weight(5.0, f64::INFINITY, 1.0), 1.0);
    }

    #[test]
    fn tls_update_is_monotone_and_brackets_the_bound() {
        for mu in [1e-4, 0.1, 1.0, 7.0, 1e3] {
            let mut last = 1.0;
            for k in 0..2000 {
                let r = k as f64 * 0.002;
                let w = tls_weight(r, mu, 1.0);
                assert!((0.0..=1.0).contains(&w) && w <= last + 1e-15);
                last = w;
            }
            assert!(mu / (mu + 1.0) <= 1.0 && (mu + 1.0) / mu >= 1.0);
        }
    }

    #[test]
    fn initial_mu_values() {
        assert!((initial_mu(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(initial_mu(0.5, 1.0), f64::INFINITY);
        assert_eq!(initial_mu(1e6, 1.0), 1e-6);
    }

    #[test]
    fn clean_data_converges_in_one_solve() {
        let lib = ShapeLibrary::bundled();
        let noise = NoiseConfig { measurement_sigma: 0.002, ..NoiseConfig::default() };
        let config = ScenarioConfig { horizon: 3, ..ScenarioConfig::default() };
        let s = Scenario::generate(&config, &lib, &noise).unwrap();
        let weights = SmootherWeights::uniform(3, 1.0, 1.0, 0.1);
        let gnc = GncSettings { noise_bound: 0.05, ..GncSettings::default() };
        let out = gnc_solve(&s.measurements, &lib, &weights, &gnc, &SolverSettings::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.weights.iter().all(|&w| w == 1.0));
        assert!(!out.degraded);
    }
}
