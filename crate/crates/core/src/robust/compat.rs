//! Pairwise shape and four-way time compatibility tests.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MeasurementSet, ShapeLibrary};

/// Distance bounds between every keypoint pair over all shapes of the
/// library, plus the inlier noise bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityBounds {
    num_keypoints: usize,
    b_min: DMatrix<f64>,
    b_max: DMatrix<f64>,
    pub epsilon: f64,
}

impl CompatibilityBounds {
    pub fn new(lib: &ShapeLibrary, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput("inlier bound ε must be finite and ≥ 0".into()));
        }
        let n = lib.num_keypoints();
        let mut b_min = DMatrix::zeros(n, n);
        let mut b_max = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let (lo, hi) = shape_bounds(lib, i, j);
                b_min[(i, j)] = lo;
                b_min[(j, i)] = lo;
                b_max[(i, j)] = hi;
                b_max[(j, i)] = hi;
            }
        }
        Ok(CompatibilityBounds { num_keypoints: n, b_min, b_max, epsilon })
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_keypoints
    }

    pub fn pair(&self, i: usize, j: usize) -> (f64, f64) {
        (self.b_min[(i, j)], self.b_max[(i, j)])
    }
}

/// `(min, max)` of `‖(B_i − B_j)c‖` over the simplex.
///
/// The maximum of a convex function over the simplex sits at a vertex. The
/// minimum is the distance from the origin to the convex hull of the
/// per-model differences; it lies in the relative interior of a face
/// spanned by at most four of them, where it is also the minimum over that
/// face's affine hull, so enumerating faces of size ≤ 4 is exact.
pub fn shape_bounds(lib: &ShapeLibrary, i: usize, j: usize) -> (f64, f64) {
    let k = lib.num_models();
    let diffs: Vec<Vector3<f64>> = (0..k).map(|m| lib.point(i, m) - lib.point(j, m)).collect();
    let b_max = diffs.iter().map(|d| d.norm()).fold(0.0, f64::max);

    let mut b_min = b_max;
    let mut subset = Vec::with_capacity(4);
    fn visit(
        start: usize,
        subset: &mut Vec<usize>,
        diffs: &[Vector3<f64>],
        best: &mut f64,
    ) {
        if !subset.is_empty() {
            if let Some(d) = affine_min_norm(subset, diffs) {
                *best = best.min(d);
            }
        }
        if subset.len() == 4 {
            return;
        }
        for m in start..diffs.len() {
            subset.push(m);
            visit(m + 1, subset, diffs, best);
            subset.pop();
        }
    }
    visit(0, &mut subset, &diffs, &mut b_min);
    (b_min, b_max)
}

/// Minimum norm over the affine hull of `diffs[subset]`, if the minimizer
/// has nonnegative barycentric coordinates.
fn affine_min_norm(subset: &[usize], diffs: &[Vector3<f64>]) -> Option<f64> {
    let base = diffs[subset[0]];
    if subset.len() == 1 {
        return Some(base.norm());
    }
    let e = DMatrix::from_fn(3, subset.len() - 1, |r, c| diffs[subset[c + 1]][r] - base[r]);
    let rhs = DVector::from_column_slice(&[-base.x, -base.y, -base.z]);
    let t = e.clone().svd(true, true).solve(&rhs, 1e-12).ok()?;
    let first = 1.0 - t.sum();
    if first < -1e-12 || t.iter().any(|&v| v < -1e-12) {
        return None;
    }
    Some((base + &e * &t).norm())
}

/// Absolute slack, meters, absorbing floating-point error in the distance
/// tests so exact inliers pass at `ε = 0`.
pub const ROUNDOFF_SLACK: f64 = 1e-9;

/// `b_min − 2ε ≤ ‖y_i − y_j‖ ≤ b_max + 2ε`.
pub fn shape_compat(y_i: &Vector3<f64>, y_j: &Vector3<f64>, b_min: f64, b_max: f64, epsilon: f64) -> bool {
    let d = (y_i - y_j).norm();
    let slack = 2.0 * epsilon + ROUNDOFF_SLACK;
    b_min - slack <= d && d <= b_max + slack
}

/// `|‖y_l^i − y_l^j‖ − ‖y_m^i − y_m^j‖| ≤ 4ε`.
pub fn time_compat(
    y_li: &Vector3<f64>,
    y_lj: &Vector3<f64>,
    y_mi: &Vector3<f64>,
    y_mj: &Vector3<f64>,
    epsilon: f64,
) -> bool {
    ((y_li - y_lj).norm() - (y_mi - y_mj).norm()).abs() <= 4.0 * epsilon + ROUNDOFF_SLACK
}

/// Which frame pairs `(l, m)` the time test compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimePairPolicy {
    /// Every frame against the first frame and against its predecessor.
    #[default]
    AnchorAndPredecessor,
    /// All frame pairs.
    All,
}

impl TimePairPolicy {
    pub fn pairs(self, horizon: usize) -> Vec<(usize, usize)> {
        match self {
            TimePairPolicy::All => (0..horizon).flat_map(|l| (l + 1..horizon).map(move |m| (l, m))).collect(),
            TimePairPolicy::AnchorAndPredecessor => {
                let mut out = vec![];
                for m in 1..horizon {
                    out.push((0, m));
                    if m > 1 {
                        out.push((m - 1, m));
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationSets {
    /// `(t, i, j)` with `i < j`.
    pub shape: Vec<(usize, usize, usize)>,
    /// `(l, m, i, j)` with `l < m`, `i < j`.
    pub time: Vec<(usize, usize, usize, usize)>,
}

/// Runs both tests over the active measurements.
pub fn build_violation_sets(
    meas: &MeasurementSet,
    bounds: &CompatibilityBounds,
    policy: TimePairPolicy,
) -> Result<ViolationSets> {
    let (horizon, n) = (meas.horizon(), meas.num_keypoints());
    if bounds.num_keypoints() != n {
        return Err(Error::DimensionMismatch {
            context: "compatibility keypoints",
            expected: bounds.num_keypoints(),
            actual: n,
        });
    }
    let eps = bounds.epsilon;
    let mut sets = ViolationSets::default();
    for t in 0..horizon {
        for i in 0..n {
            for j in i + 1..n {
                if !(meas.is_active(t, i) && meas.is_active(t, j)) {
                    continue;
                }
                let (lo, hi) = bounds.pair(i, j);
                if !shape_compat(meas.point(t, i), meas.point(t, j), lo, hi, eps) {
                    sets.shape.push((t, i, j));
                }
            }
        }
    }
    for (l, m) in policy.pairs(horizon) {
        for i in 0..n {
            for j in i + 1..n {
                let cells = [(l, i), (l, j), (m, i), (m, j)];
                if !cells.iter().all(|&(t, k)| meas.is_active(t, k)) {
                    continue;
                }
                if !time_compat(meas.point(l, i), meas.point(l, j), meas.point(m, i), meas.point(m, j), eps) {
                    sets.time.push((l, m, i, j));
                }
            }
        }
    }
    Ok(sets)
}
