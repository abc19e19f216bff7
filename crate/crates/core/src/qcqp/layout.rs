use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3::{project_to_so3, Rotation};
use crate::types::{ObjectState, Trajectory};

/// Index layout of the lifted vector `x` and the linear block `v`.
///
/// `x` stacks, in order: `R_1..R_T` (9 entries each, column-major),
/// `Ω_1..Ω_{T−1}` (9 each), `s_1..s_T` (3 each) and the homogenizing scalar
/// `h`, for a total of `21T − 8` entries. `v` stacks the `T − 1` body
/// velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    horizon: usize,
}

impl VariableLayout {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::HorizonTooShort(horizon));
        }
        Ok(VariableLayout { horizon })
    }

    /// Recovers the layout from the lifted dimension `21T − 8`.
    pub fn from_dim(dim: usize) -> Result<Self> {
        if dim < 34 || (dim + 8) % 21 != 0 {
            return Err(Error::InvalidInput(format!("{dim} is not a lifted dimension 21T − 8")));
        }
        VariableLayout::new((dim + 8) / 21)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        21 * self.horizon - 8
    }

    pub fn linear_dim(&self) -> usize {
        3 * (self.horizon - 1)
    }

    /// First index of `R_t` (t is 0-based).
    pub fn rotation(&self, t: usize) -> usize {
        debug_assert!(t < self.horizon);
        9 * t
    }

    /// First index of `Ω_t`, `t < T − 1`.
    pub fn rate(&self, t: usize) -> usize {
        debug_assert!(t + 1 < self.horizon);
        9 * self.horizon + 9 * t
    }

    /// First index of `s_t`.
    pub fn body_position(&self, t: usize) -> usize {
        debug_assert!(t < self.horizon);
        18 * self.horizon - 9 + 3 * t
    }

    pub fn homogenizer(&self) -> usize {
        self.dim() - 1
    }

    /// First index of `v_t` in the linear block.
    pub fn velocity(&self, t: usize) -> usize {
        debug_assert!(t + 1 < self.horizon);
        3 * t
    }

    /// Index of entry `(row, col)` of the 3×3 block starting at `start`.
    pub fn entry(start: usize, row: usize, col: usize) -> usize {
        start + 3 * col + row
    }

    /// Starts of every rotation-valued block: all `R_t` then all `Ω_t`.
    pub fn rotation_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.horizon)
            .map(move |t| self.rotation(t))
            .chain((0..self.horizon - 1).map(move |t| self.rate(t)))
    }

    pub fn block(&self, x: &DVector<f64>, start: usize) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| x[Self::entry(start, r, c)])
    }

    pub fn vec3(x: &DVector<f64>, start: usize) -> Vector3<f64> {
        Vector3::new(x[start], x[start + 1], x[start + 2])
    }

    /// Lifts a trajectory to `(x, v)` with `h = 1` and `s_t = R_tᵀ p_t`.
    pub fn lift(&self, traj: &Trajectory) -> Result<(DVector<f64>, DVector<f64>)> {
        if traj.horizon() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "lift horizon",
                expected: self.horizon,
                actual: traj.horizon(),
            });
        }
        let mut x = DVector::zeros(self.dim());
        let mut v = DVector::zeros(self.linear_dim());
        let put = |x: &mut DVector<f64>, start: usize, m: &Matrix3<f64>| {
            for c in 0..3 {
                for r in 0..3 {
                    x[Self::entry(start, r, c)] = m[(r, c)];
                }
            }
        };
        for (t, s) in traj.states.iter().enumerate() {
            put(&mut x, self.rotation(t), s.rotation.matrix());
            x.fixed_rows_mut::<3>(self.body_position(t)).copy_from(&s.body_position());
            if t + 1 < self.horizon {
                put(&mut x, self.rate(t), s.rotation_rate.matrix());
                v.fixed_rows_mut::<3>(self.velocity(t)).copy_from(&s.velocity);
            }
        }
        x[self.homogenizer()] = 1.0;
        Ok((x, v))
    }

    /// Reads states back from a lifted point with `h = 1`.
    ///
    /// Blocks are projected onto SO(3); exact rotations pass through unchanged.
    pub fn unlift(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<Trajectory> {
        if x.len() != self.dim() || v.len() != self.linear_dim() {
            return Err(Error::DimensionMismatch {
                context: "unlift",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut states = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let rotation = project_to_so3(&self.block(x, self.rotation(t)))?;
            let s = Self::vec3(x, self.body_position(t));
            let (velocity, rotation_rate) = if t + 1 < self.horizon {
                (
                    Self::vec3(v, self.velocity(t)),
                    project_to_so3(&self.block(x, self.rate(t)))?,
                )
            } else {
                (Vector3::zeros(), Rotation::identity())
            };
            states.push(ObjectState {
                rotation,
                position: rotation * s,
                velocity,
                rotation_rate,
            });
        }
        Ok(Trajectory::new(states))
    }
}
