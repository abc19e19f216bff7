//! Error metrics against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::geodesic_angle;
use crate::types::{ShapeCoefficient, Trajectory};

/// Per-frame pose errors plus the (time-invariant) shape error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics {
    /// `100·‖p̂ − p‖ / l` per frame.
    pub position_error_pct: Vec<f64>,
    /// Geodesic rotation error per frame, degrees.
    pub rotation_error_deg: Vec<f64>,
    /// `‖ĉ − c‖₂`.
    pub shape_error: f64,
}

impl PoseMetrics {
    pub fn last_frame(&self) -> (f64, f64) {
        (
            *self.position_error_pct.last().unwrap_or(&0.0),
            *self.rotation_error_deg.last().unwrap_or(&0.0),
        )
    }
}

pub fn pose_metrics(
    est: &Trajectory,
    gt: &Trajectory,
    c_est: &ShapeCoefficient,
    c_gt: &ShapeCoefficient,
    characteristic_length: f64,
) -> Result<PoseMetrics> {
    if est.horizon() != gt.horizon() {
        return Err(Error::DimensionMismatch {
            context: "metric horizons",
            expected: gt.horizon(),
            actual: est.horizon(),
        });
    }
    if c_est.len() != c_gt.len() {
        return Err(Error::DimensionMismatch {
            context: "metric shapes",
            expected: c_gt.len(),
            actual: c_est.len(),
        });
    }
    let pairs = || est.states.iter().zip(&gt.states);
    Ok(PoseMetrics {
        position_error_pct: pairs()
            .map(|(e, g)| 100.0 * (e.position - g.position).norm() / characteristic_length)
            .collect(),
        rotation_error_deg: pairs()
            .map(|(e, g)| geodesic_angle(&e.rotation, &g.rotation).to_degrees())
            .collect(),
        shape_error: (c_est.as_vector() - c_gt.as_vector()).norm(),
    })
}
