//! Primal-dual interior-point method for a single PSD block with free
//! variables under a convex quadratic cost:
//!
//! ```text
//! min  ⟨C, X⟩ + vᵀPv   s.t.  ⟨A_i, X⟩ + d_iᵀv = b_i,  X ⪰ 0
//! max  bᵀy − vᵀPv      s.t.  C − Σ y_i A_i = Z ⪰ 0,  Dᵀy = 2Pv
//! ```
//!
//! Infeasible-start Mehrotra predictor-corrector on the HKM direction. The
//! Newton system is reduced to the Schur complement `M_ij = ⟨A_i, X A_j Z⁻¹⟩`
//! bordered by the free block, which is eliminated with a second small
//! Schur complement.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcqp::SparseSym;

/// One equality `⟨A, X⟩ + dᵀv = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub matrix: SparseSym,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProgram {
    pub order: usize,
    pub num_free: usize,
    pub cost: DMatrix<f64>,
    pub free_cost: DMatrix<f64>,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tolerance: f64,
    /// Looser tolerance accepted when progress stalls.
    pub stall_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-9,
            stall_tolerance: 1e-6,
            max_iterations: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    /// Converged only to the stall tolerance.
    AlmostOptimal,
    MaxIterations,
    NumericalFailure,
}

impl SolverStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolverStatus::Optimal | SolverStatus::AlmostOptimal)
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: DMatrix<f64>,
    pub v: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub status: SolverStatus,
}

/// Constraint data after dependency removal and row scaling.
struct Scaled {
    /// Both triangles, `(row, col, value)`.
    full: Vec<Vec<(usize, usize, f64)>>,
    upper: Vec<Vec<(usize, usize, f64)>>,
    d: DMatrix<f64>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    p: DMatrix<f64>,
    objective_scale: f64,
    /// Original index of every kept constraint and its row scale.
    kept: Vec<(usize, f64)>,
}

fn frob_sparse(upper: &[(usize, usize, f64)]) -> f64 {
    upper
        .iter()
        .map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
        .sum::<f64>()
}

/// Indices of a maximal linearly independent subset of the constraints,
/// scanned in order.
fn independent_rows(program: &SdpProgram) -> Vec<usize> {
    let m = program.constraints.len();
    let mut by_entry: HashMap<(usize, usize), Vec<(usize, f64)>> = HashMap::new();
    let mut by_free: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (i, con) in program.constraints.iter().enumerate() {
        for &(r, c, v) in con.matrix.entries() {
            let w = if r == c { v } else { v * std::f64::consts::SQRT_2 };
            by_entry.entry((r, c)).or_default().push((i, w));
        }
        for &(k, d) in &con.free {
            by_free.entry(k).or_default().push((i, d));
        }
    }
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for list in by_entry.values().chain(by_free.values()) {
        for &(i, a) in list {
            for &(j, b) in list {
                gram[(i, j)] += a * b;
            }
        }
    }
    // In-order Cholesky with rejection of (numerically) dependent rows.
    let mut kept: Vec<usize> = vec![];
    let mut factor: Vec<Vec<f64>> = vec![];
    for i in 0..m {
        let mut row = Vec::with_capacity(kept.len());
        for (k, &j) in kept.iter().enumerate() {
            let s: f64 = (0..k).map(|l| factor[k][l] * row[l]).sum();
            row.push((gram[(i, j)] - s) / factor[k][k]);
        }
        let diag = gram[(i, i)] - row.iter().map(|v| v * v).sum::<f64>();
        if diag > 1e-10 * gram[(i, i)].max(f64::MIN_POSITIVE) {
            row.push(diag.sqrt());
            factor.push(row);
            kept.push(i);
        }
    }
    kept
}

fn scale(program: &SdpProgram) -> Scaled {
    let kept_idx = independent_rows(program);
    let mut full = Vec::with_capacity(kept_idx.len());
    let mut upper = Vec::with_capacity(kept_idx.len());
    let mut d = DMatrix::zeros(kept_idx.len(), program.num_free);
    let mut b = DVector::zeros(kept_idx.len());
    let mut kept = Vec::with_capacity(kept_idx.len());
    for (row, &i) in kept_idx.iter().enumerate() {
        let con = &program.constraints[i];
        let norm = (frob_sparse(con.matrix.entries()) + con.free.iter().map(|f| f.1 * f.1).sum::<f64>()).sqrt();
        let s = 1.0 / norm;
        let up: Vec<_> = con.matrix.entries().iter().map(|&(r, c, v)| (r, c, v * s)).collect();
        let mut fl = Vec::with_capacity(2 * up.len());
        for &(r, c, v) in &up {
            fl.push((r, c, v));
            if r != c {
                fl.push((c, r, v));
            }
        }
        for &(k, dv) in &con.free {
            d[(row, k)] += dv * s;
        }
        b[row] = con.rhs * s;
        full.push(fl);
        upper.push(up);
        kept.push((i, s));
    }
    let objective_scale = program.cost.norm().max(program.free_cost.norm()).max(1e-12);
    Scaled {
        full,
        upper,
        d,
        b,
        c: &program.cost / objective_scale,
        p: &program.free_cost / objective_scale,
        objective_scale,
        kept,
    }
}

impl Scaled {
    fn apply(&self, w: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.upper.len(),
            self.upper.iter().map(|a| {
                a.iter()
                    .map(|&(r, c, v)| if r == c { v * w[(r, r)] } else { v * (w[(r, c)] + w[(c, r)]) })
                    .sum::<f64>()
            }),
        )
    }

    fn adjoint(&self, y: &DVector<f64>, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, n);
        for (a, &yi) in self.full.iter().zip(y.iter()) {
            if yi != 0.0 {
                for &(r, c, v) in a {
                    out[(r, c)] += yi * v;
                }
            }
        }
        out
    }

    fn schur(&self, x: &DMatrix<f64>, zinv: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.full.len();
        let mut mat = DMatrix::zeros(m, m);
        for i in 0..m {
            let ai = &self.full[i];
            for j in i..m {
                let mut s = 0.0;
                for &(r, q, b) in &self.full[j] {
                    // Σ_{(p,q')∈A_i} a X[q', r] Zinv[q, p]
                    for &(p, qq, a) in ai {
                        s += a * b * x[(qq, r)] * zinv[(q, p)];
                    }
                }
                mat[(i, j)] = s;
                mat[(j, i)] = s;
            }
        }
        mat
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// A positive definite iterate's inverse Cholesky factor.
struct Factored {
    linv: DMatrix<f64>,
}

impl Factored {
    fn new(m: &DMatrix<f64>) -> Option<Self> {
        let chol = cholesky(m)?;
        let mut linv = DMatrix::identity(m.nrows(), m.nrows());
        chol.l_dirty().solve_lower_triangular_mut(&mut linv);
        if !linv.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Factored { linv })
    }

    fn inverse(&self) -> DMatrix<f64> {
        sym(self.linv.tr_mul(&self.linv))
    }

    /// Largest step in `(0, 1]` keeping `S + αΔS ⪰ 0`.
    fn max_step(&self, delta: &DMatrix<f64>) -> f64 {
        let w = sym(&self.linv * delta * self.linv.transpose());
        let lo = min_eigenvalue_bound(&w);
        if lo >= 0.0 {
            1.0
        } else {
            (-1.0 / lo).min(1.0)
        }
    }
}

/// Lanczos estimate of the smallest eigenvalue, lowered by the Ritz residual.
fn min_eigenvalue_bound(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    if n <= 40 {
        return w.clone().symmetric_eigenvalues().min();
    }
    let k = n.min(60);
    let mut basis = DMatrix::<f64>::zeros(n, k);
    // Fixed pseudo-random start vector: deterministic, yet generic enough
    // not to be orthogonal to structured eigenvectors.
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut start = DVector::from_fn(n, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    });
    start.normalize_mut();
    basis.set_column(0, &start);
    let (mut alphas, mut betas) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let scale = w.amax().max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut r = w * basis.column(j);
        alphas.push(basis.column(j).dot(&r));
        for _ in 0..2 {
            let active = basis.columns(0, j + 1);
            let coef = active.tr_mul(&r);
            r -= active * coef;
        }
        let beta = r.norm();
        betas.push(beta);
        if beta <= 1e-12 * scale || j + 1 == k {
            break;
        }
        basis.set_column(j + 1, &(r / beta));
    }
    let m = alphas.len();
    let tri = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alphas[r]
        } else if r + 1 == c {
            betas[r]
        } else if c + 1 == r {
            betas[c]
        } else {
            0.0
        }
    });
    let eig = tri.symmetric_eigen();
    let i = eig.eigenvalues.imin();
    let residual = (betas[m - 1] * eig.eigenvectors[(m - 1, i)]).abs();
    eig.eigenvalues[i] - residual
}

fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// Cholesky of the Schur matrix with growing diagonal shifts if needed.
fn robust_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = cholesky(m) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut shift = 1e-14 * scale;
    for _ in 0..8 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        shift *= 100.0;
    }
    None
}

pub fn solve(program: &SdpProgram, settings: &SolverSettings) -> Result<IpmResult> {
    let n = program.order;
    for (context, expected, actual) in [
        ("sdp cost rows", n, program.cost.nrows()),
        ("sdp cost cols", n, program.cost.ncols()),
        ("sdp free cost", program.num_free, program.free_cost.nrows()),
    ] {
        if expected != actual {
            return Err(Error::DimensionMismatch { context, expected, actual });
        }
    }
    let data = scale(program);
    let m = data.full.len();
    let nf = program.num_free;
    let bnorm = data.b.norm();
    let cnorm = data.c.norm();

    let mut x = DMatrix::<f64>::identity(n, n);
    let mut z = DMatrix::<f64>::identity(n, n) * (n as f64).sqrt().max(1.0);
    let mut y = DVector::<f64>::zeros(m);
    let mut v = DVector::<f64>::zeros(nf);
    let (Some(mut xf), Some(mut zf)) = (Factored::new(&x), Factored::new(&z)) else {
        return Err(Error::SolverFailure("initial point is not positive definite".into()));
    };

    let status;
    let mut iterations = 0;
    let mut best_measure = f64::INFINITY;
    let mut stalled = 0;
    let (mut pinf, mut dinf);

    loop {
        let pv = &data.p * &v;
        let r_p = &data.b - data.apply(&x) - &data.d * &v;
        let r_d = &data.c - data.adjoint(&y, n) - &z;
        let r_v = data.d.tr_mul(&y) - 2.0 * &pv;
        let pobj = inner(&data.c, &x) + v.dot(&pv);
        let dobj = data.b.dot(&y) - v.dot(&pv);
        pinf = r_p.norm() / (1.0 + bnorm);
        dinf = (r_d.norm() + r_v.norm()) / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let measure = pinf.max(dinf).max(gap);
        log::trace!("ipm {iterations}: pobj {pobj:.12e} dobj {dobj:.12e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e}");

        if measure <= settings.tolerance {
            status = SolverStatus::Optimal;
            break;
        }
        if measure < 0.5 * best_measure {
            best_measure = measure;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= 6 && measure <= settings.stall_tolerance {
            status = SolverStatus::AlmostOptimal;
            break;
        }
        if iterations >= settings.max_iterations {
            status = if measure <= settings.stall_tolerance {
                SolverStatus::AlmostOptimal
            } else {
                SolverStatus::MaxIterations
            };
            break;
        }
        iterations += 1;

        let zinv = zf.inverse();
        let mu = inner(&x, &z) / n as f64;

        let schur = data.schur(&x, &zinv);
        let Some(mchol) = robust_cholesky(&schur) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        let minv_d = mchol.solve(&data.d);
        let mut small = data.d.tr_mul(&minv_d) + 2.0 * &data.p;
        for i in 0..nf {
            small[(i, i)] += 1e-14 * small.diagonal().amax().max(1e-300);
        }
        let small_lu = small.lu();

        let x_rd_zinv = &x * &r_d * &zinv;
        let direction = |target: &DMatrix<f64>| -> Option<(DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
            // target = σμZ⁻¹ − X − X R_d Z⁻¹ [− ΔX_a ΔZ_a Z⁻¹]
            let h = &r_p - data.apply(target);
            let minv_h = mchol.solve(&h);
            let dv = if nf > 0 {
                small_lu.solve(&(data.d.tr_mul(&minv_h) + &r_v))?
            } else {
                DVector::zeros(0)
            };
            let dy = &minv_h - &minv_d * &dv;
            let dz = &r_d - data.adjoint(&dy, n);
            let dx = sym(target + &x * data.adjoint(&dy, n) * &zinv);
            Some((dy, dv, dx, dz))
        };

        let base = -&x - &x_rd_zinv;
        let Some((_, _, dxa, dza)) = direction(&base) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        let ap = xf.max_step(&dxa);
        let ad = zf.max_step(&dza);
        let mu_aff = inner(&(&x + ap * &dxa), &(&z + ad * &dza)) / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let target = &base + &zinv * (sigma * mu) - &dxa * &dza * &zinv;
        let Some((dy, dv, dx, dz)) = direction(&target) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        // One step for both sides: the stationarity residual `Dᵀy − 2Pv`
        // couples primal and dual variables and only contracts when they
        // move together.
        let mut alpha = (0.98 * xf.max_step(&dx).min(zf.max_step(&dz))).min(1.0);
        // The step bound is an estimate; back off until both iterates factor.
        let mut accepted = None;
        for _ in 0..30 {
            let (xn, zn) = (sym(&x + alpha * &dx), sym(&z + alpha * &dz));
            if let (Some(a), Some(b)) = (Factored::new(&xn), Factored::new(&zn)) {
                accepted = Some((xn, zn, a, b));
                break;
            }
            alpha *= 0.7;
        }
        let Some((xn, zn, a, b)) = accepted else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        (x, z, xf, zf) = (xn, zn, a, b);
        v += alpha * dv;
        y += alpha * dy;
    }

    let s = data.objective_scale;
    let pv = &data.p * &v;
    let primal_objective = s * (inner(&data.c, &x) + v.dot(&pv));
    let dual_objective = s * (data.b.dot(&y) - v.dot(&pv));
    // Dual multipliers for the original (unscaled, undropped) constraints.
    let mut y_full = DVector::zeros(program.constraints.len());
    for (row, &(i, rs)) in data.kept.iter().enumerate() {
        y_full[i] = s * rs * y[row];
    }
    Ok(IpmResult {
        x,
        v,
        y: y_full,
        z: z * s,
        primal_objective,
        dual_objective,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        iterations,
        status,
    })
}
