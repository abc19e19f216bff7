use super::{ConstraintKind, QuadraticConstraint, SparseSym, VariableLayout};

/// Number of constraints emitted by [`build_constraints`] for horizon `T`.
pub fn constraint_count(horizon: usize) -> usize {
    1 + 21 * (2 * horizon - 1) + 12 * (horizon - 1)
}

fn constraint(kind: ConstraintKind, mut quad: SparseSym, linear: Vec<(usize, f64)>, constant: f64) -> QuadraticConstraint {
    quad.normalize();
    QuadraticConstraint { quad, linear, constant, kind }
}

/// Emits, homogenized by `h`:
/// - `h² = 1`;
/// - per rotation-valued block, `RᵀR = h²I` and `RRᵀ = h²I` (6 each) and
///   `col_a × col_b = h·col_c` for cyclic `(a, b, c)` (9);
/// - translation dynamics `Ω_t s_{t+1} − h·s_t − v_t = 0`;
/// - rotation dynamics `h·R_{t+1} − R_t Ω_t = 0`.
///
/// The row and handedness equalities are redundant for SO(3) but tighten
/// the relaxation.
pub fn build_constraints(layout: &VariableLayout) -> Vec<QuadraticConstraint> {
    let h = layout.homogenizer();
    let at = VariableLayout::entry;
    let horizon = layout.horizon();
    let mut out = Vec::with_capacity(constraint_count(horizon));

    let mut hh = SparseSym::default();
    hh.add_product(h, h, 1.0);
    out.push(constraint(ConstraintKind::Homogenization, hh, vec![], -1.0));

    let blocks: Vec<usize> = layout.rotation_blocks().collect();
    for &b in &blocks {
        for a in 0..3 {
            for c in a..3 {
                let mut cols = SparseSym::default();
                let mut rows = SparseSym::default();
                for k in 0..3 {
                    cols.add_product(at(b, k, a), at(b, k, c), 1.0);
                    rows.add_product(at(b, a, k), at(b, c, k), 1.0);
                }
                if a == c {
                    cols.add_product(h, h, -1.0);
                    rows.add_product(h, h, -1.0);
                }
                out.push(constraint(ConstraintKind::ColumnOrthonormality, cols, vec![], 0.0));
                out.push(constraint(ConstraintKind::RowOrthonormality, rows, vec![], 0.0));
            }
        }
        for (a, c, d) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            // (col_a × col_c)_k = col_a[k+1] col_c[k+2] − col_a[k+2] col_c[k+1]
            for k in 0..3 {
                let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
                let mut q = SparseSym::default();
                q.add_product(at(b, k1, a), at(b, k2, c), 1.0);
                q.add_product(at(b, k2, a), at(b, k1, c), -1.0);
                q.add_product(h, at(b, k, d), -1.0);
                out.push(constraint(ConstraintKind::Handedness, q, vec![], 0.0));
            }
        }
    }
    // Orthonormality constraints are emitted interleaved above; restore the
    // documented grouping (columns, rows, handedness) per block.
    regroup_blocks(&mut out, blocks.len());

    for t in 0..horizon - 1 {
        let (rate, next_s, s, v) = (
            layout.rate(t),
            layout.body_position(t + 1),
            layout.body_position(t),
            layout.velocity(t),
        );
        for r in 0..3 {
            let mut q = SparseSym::default();
            for k in 0..3 {
                q.add_product(at(rate, r, k), next_s + k, 1.0);
            }
            q.add_product(h, s + r, -1.0);
            out.push(constraint(ConstraintKind::TranslationDynamics, q, vec![(v + r, -1.0)], 0.0));
        }
    }
    for t in 0..horizon - 1 {
        let (rot, next_rot, rate) = (layout.rotation(t), layout.rotation(t + 1), layout.rate(t));
        for c in 0..3 {
            for r in 0..3 {
                let mut q = SparseSym::default();
                q.add_product(h, at(next_rot, r, c), 1.0);
                for k in 0..3 {
                    q.add_product(at(rot, r, k), at(rate, k, c), -1.0);
                }
                out.push(constraint(ConstraintKind::RotationDynamics, q, vec![], 0.0));
            }
        }
    }
    debug_assert_eq!(out.len(), constraint_count(horizon));
    out
}

fn regroup_blocks(out: &mut [QuadraticConstraint], blocks: usize) {
    let rank = |k: ConstraintKind| match k {
        ConstraintKind::ColumnOrthonormality => 0,
        ConstraintKind::RowOrthonormality => 1,
        _ => 2,
    };
    for b in 0..blocks {
        let chunk = &mut out[1 + 21 * b..1 + 21 * (b + 1)];
        chunk.sort_by_key(|c| rank(c.kind));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::Rotation;
    use crate::types::{ObjectState, Trajectory};
    use nalgebra::{DVector, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feasible(rng: &mut ChaCha8Rng, horizon: usize) -> Trajectory {
        let mut state = ObjectState {
            rotation: Rotation::random(rng),
            position: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            velocity: Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            rotation_rate: Rotation::random(rng),
        };
        let mut states = vec![];
        for _ in 0..horizon {
            states.push(state);
            state = ObjectState {
                rotation: state.rotation * state.rotation_rate,
                position: state.position + state.rotation * state.velocity,
                velocity: Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
                rotation_rate: Rotation::random(rng),
            };
        }
        Trajectory::new(states)
    }

    #[test]
    fn counts() {
        for horizon in 2..13 {
            let layout = VariableLayout::new(horizon).unwrap();
            let cons = build_constraints(&layout);
            assert_eq!(cons.len(), 1 + 21 * (2 * horizon - 1) + 12 * (horizon - 1));
            for c in &cons {
                assert!(c.quad.entries().iter().all(|&(r, col, _)| r <= col && col < layout.dim()));
                assert!(c.linear.iter().all(|&(i, _)| i < layout.linear_dim()));
            }
        }
    }

    #[test]
    fn block_grouping() {
        let cons = build_constraints(&VariableLayout::new(2).unwrap());
        let kinds: Vec<_> = cons[1..22].iter().map(|c| c.kind).collect();
        assert!(kinds[..6].iter().all(|&k| k == ConstraintKind::ColumnOrthonormality));
        assert!(kinds[6..12].iter().all(|&k| k == ConstraintKind::RowOrthonormality));
        assert!(kinds[12..].iter().all(|&k| k == ConstraintKind::Handedness));
    }

    #[test]
    fn feasible_trajectories_satisfy_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let horizon = rng.random_range(2..9);
            let layout = VariableLayout::new(horizon).unwrap();
            let traj = random_feasible(&mut rng, horizon);
            let (x, v) = layout.lift(&traj).unwrap();
            let worst = build_constraints(&layout).iter().map(|c| c.residual(&x, &v).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "{worst}");
            let back = layout.unlift(&x, &v).unwrap();
            for (a, b) in back.states.iter().zip(&traj.states).take(horizon - 1) {
                assert!((a.position - b.position).amax() < 1e-10);
                assert!((a.rotation.matrix() - b.rotation.matrix()).amax() < 1e-10);
                assert!((a.velocity - b.velocity).amax() < 1e-10);
                assert!((a.rotation_rate.matrix() - b.rotation_rate.matrix()).amax() < 1e-10);
            }
            assert!(back.dynamics_residual() < 1e-10);
        }
    }

    #[test]
    fn identity_satisfies_exactly() {
        let layout = VariableLayout::new(3).unwrap();
        let traj = Trajectory::new(vec![ObjectState::new(Rotation::identity(), Vector3::zeros()); 3]);
        let (x, v) = layout.lift(&traj).unwrap();
        for c in build_constraints(&layout) {
            assert_eq!(c.residual(&x, &v), 0.0);
        }
    }

    #[test]
    fn reflection_breaks_handedness() {
        let layout = VariableLayout::new(2).unwrap();
        let traj = Trajectory::new(vec![ObjectState::new(Rotation::identity(), Vector3::zeros()); 2]);
        let (mut x, v) = layout.lift(&traj).unwrap();
        for r in 0..3 {
            let idx = VariableLayout::entry(layout.rotation(0), r, 2);
            x[idx] = -x[idx];
        }
        let cons = build_constraints(&layout);
        let worst_handed = cons
            .iter()
            .filter(|c| c.kind == ConstraintKind::Handedness)
            .map(|c| c.residual(&x, &v).abs())
            .fold(0.0, f64::max);
        assert!(worst_handed >= 1.0);
        // Orthonormality cannot see a reflection.
        assert!(cons
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::ColumnOrthonormality | ConstraintKind::RowOrthonormality))
            .all(|c| c.residual(&x, &v) == 0.0));
    }

    #[test]
    fn sign_flip_preserves_quadratic_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = VariableLayout::new(3).unwrap();
        let (x, _) = layout.lift(&random_feasible(&mut rng, 3)).unwrap();
        let neg = -x.clone();
        for c in build_constraints(&layout) {
            assert_eq!(c.quad.quad_form(&x), c.quad.quad_form(&neg));
        }
        let _ = DVector::<f64>::zeros(1);
    }
}
