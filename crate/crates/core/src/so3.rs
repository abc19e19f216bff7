//! Rotation type and the SO(3) helpers used throughout the estimator.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthonormality and determinant invariants.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Smallest singular value accepted by [`project_to_so3`].
const MIN_SINGULAR_VALUE: f64 = 1e-12;

/// A 3×3 rotation matrix (orthonormal columns, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates the orthonormality and handedness invariants.
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("rotation has non-finite entries".into()));
        }
        let orth = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if orth > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "matrix is not a rotation (orthonormality error {orth:e}, det {det})"
            )));
        }
        Ok(Rotation(m))
    }

    /// Exponential map of an axis-angle vector.
    pub fn from_axis_angle(axis_angle: &Vector3<f64>) -> Self {
        Rotation(*nalgebra::Rotation3::new(*axis_angle).matrix())
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Composes and re-projects onto SO(3) to stop roundoff drift.
    pub fn compose(&self, other: &Rotation) -> Self {
        let m = self.0 * other.0;
        project_to_so3(&m).unwrap_or(Rotation(m))
    }

    /// Uniformly distributed rotation (via a normalized Gaussian quaternion).
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            q[0], q[1], q[2], q[3],
        ));
        Rotation(*q.to_rotation_matrix().matrix())
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::try_from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        std::array::from_fn(|i| std::array::from_fn(|j| r.0[(i, j)]))
    }
}

/// Closest rotation to `m` in Frobenius norm.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let svd = m.svd(true, true);
    let smallest = svd.singular_values.min();
    if smallest < MIN_SINGULAR_VALUE {
        return Err(Error::DegenerateMatrix(smallest));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sign = (u * v_t).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    Ok(Rotation(u * correction * v_t))
}

/// Geodesic distance on SO(3) in radians, in `[0, π]`.
pub fn geodesic_angle(r1: &Rotation, r2: &Rotation) -> f64 {
    let cos = ((r1.0.transpose() * r2.0).trace() - 1.0) / 2.0;
    cos.clamp(-1.0, 1.0).acos()
}
