//! The smoothing objective evaluated directly on states.

use crate::error::{Error, Result};
use crate::types::{MeasurementSet, ShapeCoefficient, ShapeLibrary, SmootherWeights, Trajectory};

pub(crate) fn check_dimensions(
    traj: &Trajectory,
    c: &ShapeCoefficient,
    lib: &ShapeLibrary,
    meas: &MeasurementSet,
    weights: &SmootherWeights,
) -> Result<()> {
    let pairs = [
        ("trajectory horizon", meas.horizon(), traj.horizon()),
        ("measurement keypoints", lib.num_keypoints(), meas.num_keypoints()),
        ("shape coefficient", lib.num_models(), c.len()),
        ("velocity weights", meas.horizon().saturating_sub(2), weights.velocity.len()),
        ("rotation-rate weights", meas.horizon().saturating_sub(2), weights.rotation_rate.len()),
    ];
    for (context, expected, actual) in pairs {
        if expected != actual {
            return Err(Error::DimensionMismatch { context, expected, actual });
        }
    }
    Ok(())
}

/// Sum of the weighted measurement residuals, the shape prior and the
/// velocity / rotation-rate smoothing terms.
///
/// The dynamics are not checked here: they are constraints, not costs.
pub fn evaluate_objective(
    traj: &Trajectory,
    c: &ShapeCoefficient,
    lib: &ShapeLibrary,
    meas: &MeasurementSet,
    weights: &SmootherWeights,
) -> Result<f64> {
    check_dimensions(traj, c, lib, meas, weights)?;
    let cv = c.as_vector();

    let mut total = 0.0;
    for (t, state) in traj.states.iter().enumerate() {
        for i in 0..lib.num_keypoints() {
            let w = meas.effective_weight(t, i);
            if w == 0.0 {
                continue;
            }
            let predicted = state.rotation * (lib.block(i) * cv) + state.position;
            total += w * (meas.point(t, i) - predicted).norm_squared();
        }
    }

    let k = lib.num_models() as f64;
    total += weights.shape * cv.iter().map(|ci| (ci - 1.0 / k).powi(2)).sum::<f64>();

    // Step t's twist is stored on state t; the last state's twist is unused.
    for t in 0..weights.velocity.len() {
        let (a, b) = (&traj.states[t], &traj.states[t + 1]);
        total += weights.velocity[t] * (b.velocity - a.velocity).norm_squared();
        total += weights.rotation_rate[t]
            * (b.rotation_rate.matrix() - a.rotation_rate.matrix()).norm_squared();
    }
    Ok(total)
}
