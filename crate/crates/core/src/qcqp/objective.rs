use nalgebra::{DMatrix, DVector};

use super::VariableLayout;
use crate::error::{Error, Result};
use crate::shape::ShapeOperators;
use crate::types::{MeasurementSet, ShapeLibrary, SmootherWeights};

/// Cost matrices `(Q, P)` with `xᵀQx + vᵀPv` equal to the objective at the
/// optimal shape for every lifted feasible point.
///
/// Each cost term is a weighted squared norm of a residual that is linear in
/// `x` (resp. `v`); the rows are stacked into `J` and `Q = JᵀJ`.
pub fn build_objective(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    ops: &ShapeOperators,
    weights: &SmootherWeights,
    layout: &VariableLayout,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (horizon, n, k) = (layout.horizon(), lib.num_keypoints(), lib.num_models());
    for (context, expected, actual) in [
        ("objective horizon", horizon, meas.horizon()),
        ("objective operators horizon", horizon, ops.horizon()),
        ("objective keypoints", n, meas.num_keypoints()),
        ("objective models", k, ops.num_models()),
        ("velocity weights", horizon - 2, weights.velocity.len()),
        ("rotation-rate weights", horizon - 2, weights.rotation_rate.len()),
    ] {
        if expected != actual {
            return Err(Error::DimensionMismatch { context, expected, actual });
        }
    }
    let dim = layout.dim();
    let h = layout.homogenizer();

    // body(t, i) x = R_tᵀ y_t^i − s_t
    let body = |t: usize, i: usize| {
        let y = meas.point(t, i);
        let mut m = DMatrix::<f64>::zeros(3, dim);
        for a in 0..3 {
            for r in 0..3 {
                m[(a, VariableLayout::entry(layout.rotation(t), r, a))] = y[r];
            }
            m[(a, layout.body_position(t) + a)] = -1.0;
        }
        m
    };

    // c(x) = 2G (Σ w B_iᵀ body(t, i) x + λ c̄ h) + g h
    let mut sum = DMatrix::<f64>::zeros(k, dim);
    for t in 0..horizon {
        for i in 0..n {
            let w = ops.weight(t, i);
            if w != 0.0 {
                sum += w * lib.block(i).transpose() * body(t, i);
            }
        }
    }
    let mean = DVector::from_element(k, 1.0 / k as f64);
    let mut shape_map = 2.0 * &ops.g_mat * sum;
    let offset = 2.0 * ops.shape_weight * &ops.g_mat * &mean + &ops.g_vec;
    for a in 0..k {
        shape_map[(a, h)] += offset[a];
    }

    let active = ops.weights.iter().filter(|&&w| w != 0.0).count();
    let smooth_rows = 9 * weights.rotation_rate.len();
    let mut jac = DMatrix::<f64>::zeros(3 * active + k + smooth_rows, dim);
    let mut row = 0;
    for t in 0..horizon {
        for i in 0..n {
            let w = ops.weight(t, i);
            if w == 0.0 {
                continue;
            }
            let residual = (body(t, i) - lib.block(i) * &shape_map) * w.sqrt();
            jac.rows_mut(row, 3).copy_from(&residual);
            row += 3;
        }
    }
    let mut prior = shape_map.clone();
    for a in 0..k {
        prior[(a, h)] -= mean[a];
    }
    jac.rows_mut(row, k).copy_from(&(prior * ops.shape_weight.sqrt()));
    row += k;
    for (t, &kappa) in weights.rotation_rate.iter().enumerate() {
        let s = kappa.sqrt();
        for e in 0..9 {
            jac[(row + e, layout.rate(t + 1) + e)] = s;
            jac[(row + e, layout.rate(t) + e)] = -s;
        }
        row += 9;
    }
    let q = jac.tr_mul(&jac);
    let q = (&q + q.transpose()) * 0.5;

    let mut pjac = DMatrix::<f64>::zeros(3 * weights.velocity.len(), layout.linear_dim());
    for (t, &omega) in weights.velocity.iter().enumerate() {
        let s = omega.sqrt();
        for e in 0..3 {
            pjac[(3 * t + e, layout.velocity(t + 1) + e)] = s;
            pjac[(3 * t + e, layout.velocity(t) + e)] = -s;
        }
    }
    let p = pjac.tr_mul(&pjac);
    Ok((q, p))
}
