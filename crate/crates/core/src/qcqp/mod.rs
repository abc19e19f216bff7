//! The tracking problem as a quadratically constrained quadratic program.
//!
//! The shape coefficient is eliminated through its closed form, positions are
//! replaced by body-frame positions `s_t = R_tᵀ p_t`, and every remaining
//! term becomes quadratic in the homogenized vector `x` (see
//! [`VariableLayout`]) plus a convex quadratic in the velocities `v`:
//!
//! ```text
//! min  xᵀQx + vᵀPv   s.t.  xᵀA_i x + d_iᵀv + f_i = 0
//! ```

mod constraints;
mod dump;
mod layout;
mod objective;

pub use constraints::{build_constraints, constraint_count};
pub use dump::{parse_dump, write_dump};
pub use layout::VariableLayout;
pub use objective::build_objective;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::shape::ShapeOperators;
use crate::types::{MeasurementSet, ShapeLibrary, SmootherWeights};

/// Sparse symmetric matrix stored as upper-triangle entries `(row ≤ col)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn from_upper(entries: Vec<(usize, usize, f64)>) -> Self {
        let mut m = SparseSym { entries };
        m.normalize();
        m
    }

    /// Adds `coef · x_i · x_j` to the quadratic form.
    pub fn add_product(&mut self, i: usize, j: usize, coef: f64) {
        if i == j {
            self.entries.push((i, i, coef));
        } else {
            self.entries.push((i.min(j), i.max(j), coef / 2.0));
        }
    }

    /// Sorts and merges duplicate entries, dropping exact zeros.
    pub fn normalize(&mut self) {
        for e in &mut self.entries {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        self.entries = merged;
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * x[r] * x[r] } else { 2.0 * v * x[r] * x[c] })
            .sum()
    }

    /// `trace(A X)` for a symmetric `X`.
    pub fn trace_with(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * x[(r, r)] } else { v * (x[(r, c)] + x[(c, r)]) })
            .sum()
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }
}

/// What a constraint encodes; used for diagnostics and the dump format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Homogenization,
    ColumnOrthonormality,
    RowOrthonormality,
    Handedness,
    TranslationDynamics,
    RotationDynamics,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::Homogenization => "homogenization",
            ConstraintKind::ColumnOrthonormality => "column_orthonormality",
            ConstraintKind::RowOrthonormality => "row_orthonormality",
            ConstraintKind::Handedness => "handedness",
            ConstraintKind::TranslationDynamics => "translation_dynamics",
            ConstraintKind::RotationDynamics => "rotation_dynamics",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ConstraintKind::Homogenization,
            ConstraintKind::ColumnOrthonormality,
            ConstraintKind::RowOrthonormality,
            ConstraintKind::Handedness,
            ConstraintKind::TranslationDynamics,
            ConstraintKind::RotationDynamics,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// `xᵀAx + dᵀv + f = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub quad: SparseSym,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    pub kind: ConstraintKind,
}

impl QuadraticConstraint {
    pub fn residual(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.quad.quad_form(x) + self.linear.iter().map(|&(i, d)| d * v[i]).sum::<f64>() + self.constant
    }

    /// Residual at a lifted matrix `X` instead of a vector.
    pub fn lifted_residual(&self, x: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        self.quad.trace_with(x) + self.linear.iter().map(|&(i, d)| d * v[i]).sum::<f64>() + self.constant
    }
}

/// The canonical QCQP.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub layout: VariableLayout,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub constraints: Vec<QuadraticConstraint>,
}

impl QcqpProblem {
    pub fn objective(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + v.dot(&(&self.p * v))
    }

    pub fn max_violation(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| c.residual(x, v).abs()).fold(0.0, f64::max)
    }
}

/// Builds objective and constraints for one measurement horizon.
pub fn build_problem(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    ops: &ShapeOperators,
    weights: &SmootherWeights,
) -> Result<QcqpProblem> {
    let layout = VariableLayout::new(meas.horizon())?;
    let (q, p) = build_objective(meas, lib, ops, weights, &layout)?;
    Ok(QcqpProblem {
        layout,
        q,
        p,
        constraints: build_constraints(&layout),
    })
}
