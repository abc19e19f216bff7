//! Closed-form optimal shape coefficients for fixed poses.
//!
//! With the poses held fixed the objective is a least-squares problem in `c`
//! under the single constraint `1ᵀc = 1`. Writing
//!
//! ```text
//! H = ½ (Bᵀ (Σ_t W_t) B + λ I)⁻¹
//! G = H − H 1 1ᵀ H / (1ᵀ H 1)
//! g = H 1 / (1ᵀ H 1)
//! ```
//!
//! the minimizer is `c* = 2 G (Bᵀ Σ_t W_t h_t + λ c̄) + g`, where `h_t`
//! stacks the measurements moved into the body frame, `R_tᵀ y_t^i − s_t`.
//! `H`, `G` and `g` only depend on the library and the weights, so they are
//! computed once per horizon and reused by every pose hypothesis.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::so3::Rotation;
use crate::types::{MeasurementSet, ShapeCoefficient, ShapeLibrary, Trajectory};

/// Relative eigenvalue floor below which `BᵀWB + λI` counts as singular.
const SINGULAR_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Precomputed matrices of the closed-form shape solve.
#[derive(Debug, Clone)]
pub struct ShapeOperators {
    pub h: DMatrix<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    /// Effective measurement weights, row-major `(t, i)`; masked cells are zero.
    pub weights: Vec<f64>,
    pub shape_weight: f64,
    horizon: usize,
    num_keypoints: usize,
}

impl ShapeOperators {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_models(&self) -> usize {
        self.h.nrows()
    }

    pub fn weight(&self, t: usize, i: usize) -> f64 {
        self.weights[t * self.num_keypoints + i]
    }
}

/// Builds `H`, `G` and `g` for the measurement weights and mask of `meas`.
pub fn precompute_shape_operators(
    lib: &ShapeLibrary,
    meas: &MeasurementSet,
    shape_weight: f64,
) -> Result<ShapeOperators> {
    let (n, k, horizon) = (lib.num_keypoints(), lib.num_models(), meas.horizon());
    if meas.num_keypoints() != n {
        return Err(Error::DimensionMismatch {
            context: "shape operators keypoints",
            expected: n,
            actual: meas.num_keypoints(),
        });
    }
    if !(shape_weight >= 0.0) {
        return Err(Error::InvalidInput("shape regularization must be ≥ 0".into()));
    }
    let weights: Vec<f64> = (0..horizon)
        .flat_map(|t| (0..n).map(move |i| (t, i)))
        .map(|(t, i)| meas.effective_weight(t, i))
        .collect();

    let mut normal = DMatrix::<f64>::identity(k, k) * shape_weight;
    for i in 0..n {
        let total: f64 = (0..horizon).map(|t| weights[t * n + i]).sum();
        if total != 0.0 {
            let b = lib.block(i);
            normal += total * b.transpose() * b;
        }
    }
    let normal = (&normal + normal.transpose()) * 0.5;

    let eig = normal.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max().abs().max(f64::MIN_POSITIVE));
    if lo <= SINGULAR_RELATIVE_TOLERANCE * hi {
        return Err(Error::SingularShapeSystem(format!(
            "BᵀWB + λI has eigenvalue {lo:e} (largest {hi:e}); use λ > 0 or more keypoints"
        )));
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::SingularShapeSystem("Cholesky factorization failed".into()))?;
    let h = chol.inverse() * 0.5;
    let h = (&h + h.transpose()) * 0.5;

    let h_one = h.column_sum();
    let denom = h_one.sum();
    let g_mat = &h - &h_one * h_one.transpose() / denom;
    let g_vec = h_one / denom;
    Ok(ShapeOperators {
        h,
        g_mat,
        g_vec,
        weights,
        shape_weight,
        horizon,
        num_keypoints: n,
    })
}

/// Optimal shape for poses given in body-frame form, `(R_t, s_t = R_tᵀ p_t)`.
pub fn optimal_shape_body(
    rotations: &[Rotation],
    body_positions: &[Vector3<f64>],
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    ops: &ShapeOperators,
) -> Result<ShapeCoefficient> {
    let horizon = ops.horizon();
    for (context, actual) in [
        ("shape rotations", rotations.len()),
        ("shape positions", body_positions.len()),
        ("shape measurements", meas.horizon()),
    ] {
        if actual != horizon {
            return Err(Error::DimensionMismatch { context, expected: horizon, actual });
        }
    }
    let k = lib.num_models();
    if ops.num_models() != k || meas.num_keypoints() != lib.num_keypoints() {
        return Err(Error::DimensionMismatch {
            context: "shape library",
            expected: ops.num_models(),
            actual: k,
        });
    }

    let mut rhs = DVector::from_element(k, ops.shape_weight / k as f64);
    for t in 0..horizon {
        let rt = rotations[t].matrix().transpose();
        for i in 0..lib.num_keypoints() {
            let w = ops.weight(t, i);
            if w == 0.0 {
                continue;
            }
            let body = rt * meas.point(t, i) - body_positions[t];
            rhs += w * lib.block(i).transpose() * body;
        }
    }
    let mut c = 2.0 * &ops.g_mat * rhs + &ops.g_vec;
    // Remove the roundoff component off the constraint hyperplane.
    let drift = (c.sum() - 1.0) / k as f64;
    c.add_scalar_mut(-drift);
    Ok(ShapeCoefficient::new_unchecked(c))
}

/// Optimal shape for the poses of `traj` (world-frame positions).
pub fn optimal_shape(
    traj: &Trajectory,
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    ops: &ShapeOperators,
) -> Result<ShapeCoefficient> {
    let rotations: Vec<Rotation> = traj.states.iter().map(|s| s.rotation).collect();
    let body: Vec<Vector3<f64>> = traj.states.iter().map(|s| s.body_position()).collect();
    optimal_shape_body(&rotations, &body, meas, lib, ops)
}

/// Keypoints of the instance described by `c`: `x_i = B_i c`.
pub fn reconstruct_keypoints(lib: &ShapeLibrary, c: &ShapeCoefficient) -> Vec<Vector3<f64>> {
    (0..lib.num_keypoints()).map(|i| lib.block(i) * c.as_vector()).collect()
}
