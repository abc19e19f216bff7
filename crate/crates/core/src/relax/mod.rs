//! Shor relaxation of the tracking QCQP, rounding, and certification.
//!
//! `X = xxᵀ` is relaxed to `X ⪰ 0`; the velocity block `v` stays a free
//! vector with its convex quadratic cost. The relaxation value lower-bounds
//! the non-convex optimum, so the gap between any feasible estimate and it
//! bounds that estimate's suboptimality.

pub mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::evaluate_objective;
use crate::qcqp::{build_problem, QcqpProblem, VariableLayout};
use crate::shape::{optimal_shape, precompute_shape_operators, ShapeOperators};
use crate::so3::project_to_so3;
use crate::types::{MeasurementSet, ShapeCoefficient, ShapeLibrary, SmootherWeights, Trajectory};

pub use ipm::{SdpConstraint, SdpProgram, SolverSettings, SolverStatus};

/// Default threshold on the relative gap below which a solve counts as tight.
pub const TIGHTNESS_THRESHOLD: f64 = 1e-4;
/// Gaps more negative than this indicate a bug rather than roundoff.
pub const NEGATIVE_GAP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    pub v: DVector<f64>,
    /// Relaxation value: the dual objective, a lower bound on the QCQP
    /// optimum by weak duality (up to the dual infeasibility).
    pub lower_bound: f64,
    pub primal_objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Eigenvalues of `X`, descending.
    pub eigenvalues: Vec<f64>,
}

impl SdpSolution {
    /// `λ₁ / λ₂` of `X`, saturating at `f64::MAX` when `λ₂ ≤ 0`.
    pub fn rank1_ratio(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [l1, l2, ..] if *l2 > 0.0 => (l1 / l2).min(f64::MAX),
            _ => f64::MAX,
        }
    }
}

/// One PSD cone of the lifted dimension, equalities mirroring the QCQP
/// constraint list, and the quadratic cost on `v` kept as is.
pub fn assemble_sdp(problem: &QcqpProblem) -> SdpProgram {
    SdpProgram {
        order: problem.layout.dim(),
        num_free: problem.layout.linear_dim(),
        cost: problem.q.clone(),
        free_cost: problem.p.clone(),
        constraints: problem
            .constraints
            .iter()
            .map(|c| SdpConstraint {
                matrix: c.quad.clone(),
                free: c.linear.clone(),
                rhs: -c.constant,
            })
            .collect(),
    }
}

pub fn solve_sdp(program: &SdpProgram, settings: &SolverSettings) -> Result<SdpSolution> {
    let res = ipm::solve(program, settings)?;
    if !res.status.is_usable() {
        return Err(Error::SolverFailure(format!(
            "{:?} after {} iterations (primal infeasibility {:.1e}, dual infeasibility {:.1e})",
            res.status, res.iterations, res.primal_infeasibility, res.dual_infeasibility
        )));
    }
    if res.status == SolverStatus::AlmostOptimal {
        log::debug!("SDP converged to reduced accuracy after {} iterations", res.iterations);
    }
    let mut eigenvalues: Vec<f64> = res.x.clone().symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(SdpSolution {
        x: res.x,
        v: res.v,
        lower_bound: res.dual_objective,
        primal_objective: res.primal_objective,
        status: res.status,
        iterations: res.iterations,
        primal_infeasibility: res.primal_infeasibility,
        dual_infeasibility: res.dual_infeasibility,
        eigenvalues,
    })
}

/// Leading eigenvector of `X`, scaled to `h = +1` and repaired into a point
/// that satisfies every QCQP constraint exactly.
///
/// Rotation blocks are projected onto SO(3), the rates are re-derived as
/// `Ω_t = R_tᵀR_{t+1}` and the velocities as `v_t = Ω_t s_{t+1} − s_t`.
pub fn round_lifted(sol: &SdpSolution, layout: &VariableLayout) -> Result<(DVector<f64>, DVector<f64>)> {
    let dim = layout.dim();
    if sol.x.nrows() != dim {
        return Err(Error::DimensionMismatch { context: "rounding", expected: dim, actual: sol.x.nrows() });
    }
    let eig = sol.x.clone().symmetric_eigen();
    let lead = eig.eigenvalues.imax();
    let scale = eig.eigenvalues[lead].max(0.0).sqrt();
    let u = eig.eigenvectors.column(lead) * scale;
    let hval = u[layout.homogenizer()];
    if hval.abs() < 1e-6 {
        return Err(Error::DegenerateEigenvector(hval));
    }
    let raw = u / hval;

    let horizon = layout.horizon();
    let mut rotations = Vec::with_capacity(horizon);
    for t in 0..horizon {
        rotations.push(project_to_so3(&layout.block(&raw, layout.rotation(t)))?);
    }
    let body: Vec<_> = (0..horizon).map(|t| VariableLayout::vec3(&raw, layout.body_position(t))).collect();

    let mut x = DVector::zeros(dim);
    let mut v = DVector::zeros(layout.linear_dim());
    let put = |x: &mut DVector<f64>, start: usize, m: &nalgebra::Matrix3<f64>| {
        for c in 0..3 {
            for r in 0..3 {
                x[VariableLayout::entry(start, r, c)] = m[(r, c)];
            }
        }
    };
    for t in 0..horizon {
        put(&mut x, layout.rotation(t), rotations[t].matrix());
        x.fixed_rows_mut::<3>(layout.body_position(t)).copy_from(&body[t]);
        if t + 1 < horizon {
            let rate = rotations[t].matrix().transpose() * rotations[t + 1].matrix();
            put(&mut x, layout.rate(t), &rate);
            v.fixed_rows_mut::<3>(layout.velocity(t)).copy_from(&(rate * body[t + 1] - body[t]));
        }
    }
    x[layout.homogenizer()] = 1.0;
    Ok((x, v))
}

/// A feasible estimate extracted from a relaxation solution.
#[derive(Debug, Clone)]
pub struct RoundedEstimate {
    pub trajectory: Trajectory,
    pub shape: ShapeCoefficient,
    pub objective: f64,
}

/// Rounds `sol` to states, recomputes the optimal shape for them and
/// evaluates the objective there.
///
/// The last frame's twist is not determined by the horizon; it repeats the
/// previous step's twist (the constant-twist prediction).
pub fn round_solution(
    sol: &SdpSolution,
    layout: &VariableLayout,
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    ops: &ShapeOperators,
    weights: &SmootherWeights,
) -> Result<RoundedEstimate> {
    let (x, v) = round_lifted(sol, layout)?;
    let mut trajectory = layout.unlift(&x, &v)?;
    let last = trajectory.states.len() - 1;
    trajectory.states[last].velocity = trajectory.states[last - 1].velocity;
    trajectory.states[last].rotation_rate = trajectory.states[last - 1].rotation_rate;
    let shape = optimal_shape(&trajectory, meas, lib, ops)?;
    let objective = evaluate_objective(&trajectory, &shape, lib, meas, weights)?;
    Ok(RoundedEstimate { trajectory, shape, objective })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub f_hat: f64,
    pub f_sdp: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub rank1_ratio: f64,
    pub tight: bool,
}

impl Certificate {
    /// A gap below `−NEGATIVE_GAP_SLACK` contradicts the relaxation ordering.
    pub fn is_inconsistent(&self) -> bool {
        self.gap < -NEGATIVE_GAP_SLACK
    }
}

pub fn certify(f_hat: f64, sol: &SdpSolution) -> Certificate {
    certify_values(f_hat, sol.lower_bound, sol.rank1_ratio(), TIGHTNESS_THRESHOLD)
}

pub fn certify_values(f_hat: f64, f_sdp: f64, rank1_ratio: f64, threshold: f64) -> Certificate {
    let gap = f_hat - f_sdp;
    let rel_gap = gap / f_hat.abs().max(1.0);
    let cert = Certificate {
        f_hat,
        f_sdp,
        gap,
        rel_gap,
        rank1_ratio,
        tight: rel_gap < threshold,
    };
    if cert.is_inconsistent() {
        log::warn!("negative suboptimality gap {gap:e}: relaxation value exceeds a feasible objective");
    }
    cert
}

/// Output of a certified solve.
#[derive(Debug, Clone)]
pub struct CastEstimate {
    pub trajectory: Trajectory,
    pub shape: ShapeCoefficient,
    pub certificate: Certificate,
    pub status: SolverStatus,
    pub iterations: usize,
}

/// Builds, relaxes, solves, rounds and certifies one horizon.
pub fn solve_cast(
    meas: &MeasurementSet,
    lib: &ShapeLibrary,
    weights: &SmootherWeights,
    settings: &SolverSettings,
) -> Result<CastEstimate> {
    weights.validate(meas.horizon(), lib)?;
    let ops = precompute_shape_operators(lib, meas, weights.shape)?;
    let problem = build_problem(meas, lib, &ops, weights)?;
    let sol = solve_sdp(&assemble_sdp(&problem), settings)?;
    let rounded = round_solution(&sol, &problem.layout, meas, lib, &ops, weights)?;
    Ok(CastEstimate {
        certificate: certify(rounded.objective, &sol),
        trajectory: rounded.trajectory,
        shape: rounded.shape,
        status: sol.status,
        iterations: sol.iterations,
    })
}
