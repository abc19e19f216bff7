//! Standalone certification and pruning commands.

use cast_core::qcqp::{parse_dump, QcqpProblem};
use cast_core::relax::{
    assemble_sdp, certify_values, round_lifted, solve_sdp, Certificate, SolverSettings, TIGHTNESS_THRESHOLD,
};
use cast_core::robust::{prune, PruneReport, TimePairPolicy};
use cast_core::{MeasurementSet, ShapeLibrary};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Relative tolerance when comparing a stored bound with a recomputed one.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub certificate: Certificate,
    pub max_constraint_violation: f64,
    pub iterations: usize,
    /// Present when a stored certificate was checked.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_stored: Option<bool>,
}

/// Solves the relaxation of a dumped problem, rounds at the QCQP level and
/// certifies the rounded point against the relaxation bound.
pub fn certify_problem(problem: &QcqpProblem, settings: &SolverSettings) -> Result<CertifyReport> {
    let sol = solve_sdp(&assemble_sdp(problem), settings)?;
    let (x, v) = round_lifted(&sol, &problem.layout)?;
    let f_hat = problem.objective(&x, &v);
    Ok(CertifyReport {
        certificate: certify_values(f_hat, sol.lower_bound, sol.rank1_ratio(), TIGHTNESS_THRESHOLD),
        max_constraint_violation: problem.max_violation(&x, &v),
        iterations: sol.iterations,
        matches_stored: None,
    })
}

pub fn certify_dump(text: &str, settings: &SolverSettings) -> Result<CertifyReport> {
    certify_problem(&parse_dump(text)?, settings)
}

/// A stored certificate agrees when its bound matches the recomputed one
/// and it does not claim tightness the recomputation rejects.
pub fn certificate_matches(stored: &Certificate, fresh: &Certificate) -> bool {
    let scale = 1.0f64.max(fresh.f_sdp.abs());
    (stored.f_sdp - fresh.f_sdp).abs() <= BOUND_TOLERANCE * scale && (!stored.tight || fresh.tight)
}

pub fn prune_measurements(
    measurements_json: &str,
    lib: &ShapeLibrary,
    epsilon: f64,
    policy: TimePairPolicy,
) -> Result<PruneReport> {
    let meas: MeasurementSet = serde_json::from_str(measurements_json)
        .map_err(|e| CliError::Config(format!("invalid measurements: {e}")))?;
    Ok(prune(&meas, lib, epsilon, policy)?)
}
