//! Domain types shared by every stage of the pipeline.

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::Rotation;

/// Pose and twist of the object at one frame.
///
/// `velocity` and `rotation_rate` carry the object from this frame to the
/// next; on the last frame of a trajectory they are unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
    /// Body-frame displacement per step.
    pub velocity: Vector3<f64>,
    /// Body-frame rotation per step.
    pub rotation_rate: Rotation,
}

impl ObjectState {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        ObjectState {
            rotation,
            position,
            velocity: Vector3::zeros(),
            rotation_rate: Rotation::identity(),
        }
    }

    /// Position expressed in the body frame, `Rᵀp`.
    pub fn body_position(&self) -> Vector3<f64> {
        self.rotation.matrix().transpose() * self.position
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
            && self.rotation_rate.matrix().iter().all(|v| v.is_finite())
    }
}

/// States over a smoothing horizon, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<ObjectState>,
}

impl Trajectory {
    pub fn new(states: Vec<ObjectState>) -> Self {
        Trajectory { states }
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Largest violation of `p' = p + Rv` and `R' = RΩ` over the horizon.
    pub fn dynamics_residual(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let dp = (b.position - a.position - a.rotation * a.velocity).amax();
                let dr = (b.rotation.matrix() - a.rotation.matrix() * a.rotation_rate.matrix()).amax();
                dp.max(dr)
            })
            .fold(0.0, f64::max)
    }
}

/// Active shape model library: `K` models of `N` corresponding keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeLibrary {
    /// One 3×K block per keypoint; column `k` is that keypoint on model `k`.
    blocks: Vec<Matrix3xX<f64>>,
    length_scale: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    models: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_scale: Option<f64>,
}

impl ShapeLibrary {
    /// Builds a library from `models[k][i]`, keypoint `i` of model `k`.
    pub fn from_models(models: &[Vec<Vector3<f64>>]) -> Result<Self> {
        let k = models.len();
        let n = models.first().map_or(0, Vec::len);
        if k == 0 || n == 0 {
            return Err(Error::InvalidInput("shape library needs K ≥ 1 and N ≥ 1".into()));
        }
        if models.iter().any(|m| m.len() != n) {
            return Err(Error::InvalidInput("library models have differing keypoint counts".into()));
        }
        if models.iter().flatten().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("library has non-finite coordinates".into()));
        }
        let blocks = (0..n)
            .map(|i| Matrix3xX::from_fn(k, |r, c| models[c][i][r]))
            .collect();
        Ok(ShapeLibrary { blocks, length_scale: None })
    }

    pub fn with_length_scale(mut self, length_scale: f64) -> Self {
        self.length_scale = Some(length_scale);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LibraryFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("library JSON: {e}")))?;
        if file.models.len() != file.k {
            return Err(Error::DimensionMismatch {
                context: "library models",
                expected: file.k,
                actual: file.models.len(),
            });
        }
        if let Some(bad) = file.models.iter().find(|m| m.len() != file.n) {
            return Err(Error::DimensionMismatch {
                context: "library keypoints",
                expected: file.n,
                actual: bad.len(),
            });
        }
        let models: Vec<Vec<Vector3<f64>>> = file
            .models
            .iter()
            .map(|m| m.iter().map(|p| Vector3::from(*p)).collect())
            .collect();
        let mut lib = ShapeLibrary::from_models(&models)?;
        lib.length_scale = file.length_scale;
        Ok(lib)
    }

    pub fn to_json(&self) -> String {
        let file = LibraryFile {
            k: self.num_models(),
            n: self.num_keypoints(),
            models: (0..self.num_models())
                .map(|k| (0..self.num_keypoints()).map(|i| self.point(i, k).into()).collect())
                .collect(),
            length_scale: self.length_scale,
        };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    /// The bundled synthetic library (K = 4, N = 10, 0.2 m box).
    pub fn bundled() -> Self {
        ShapeLibrary::from_json(include_str!("../assets/default_library.json"))
            .expect("bundled library is valid")
    }

    pub fn num_models(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn num_keypoints(&self) -> usize {
        self.blocks.len()
    }

    pub fn length_scale(&self) -> Option<f64> {
        self.length_scale
    }

    /// `B_i`, the 3×K block of keypoint `i`.
    pub fn block(&self, i: usize) -> &Matrix3xX<f64> {
        &self.blocks[i]
    }

    /// Keypoint `i` on model `k`.
    pub fn point(&self, i: usize, k: usize) -> Vector3<f64> {
        self.blocks[i].column(k).into_owned()
    }

    /// All blocks stacked into a 3N×K matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, k) = (self.num_keypoints(), self.num_models());
        DMatrix::from_fn(3 * n, k, |r, c| self.blocks[r / 3][(r % 3, c)])
    }
}

/// Shape coefficients on the affine hull of the simplex (`1ᵀc = 1`).
///
/// Nonnegativity is deliberately not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShapeCoefficient(DVector<f64>);

impl ShapeCoefficient {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(c: DVector<f64>) -> Result<Self> {
        if c.is_empty() || !c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("shape coefficient must be finite and nonempty".into()));
        }
        let sum = c.sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("shape coefficients sum to {sum}, not 1")));
        }
        Ok(ShapeCoefficient(c))
    }

    pub(crate) fn new_unchecked(c: DVector<f64>) -> Self {
        ShapeCoefficient(c)
    }

    /// The mean shape `(1/K)·1`.
    pub fn mean(k: usize) -> Self {
        ShapeCoefficient(DVector::from_element(k, 1.0 / k as f64))
    }

    /// Unit vector selecting library model `k`.
    pub fn vertex(num_models: usize, k: usize) -> Self {
        let mut c = DVector::zeros(num_models);
        c[k] = 1.0;
        ShapeCoefficient(c)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_negative(&self) -> bool {
        self.0.iter().any(|&v| v < 0.0)
    }
}

impl TryFrom<Vec<f64>> for ShapeCoefficient {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ShapeCoefficient::new(DVector::from_vec(v))
    }
}

impl From<ShapeCoefficient> for Vec<f64> {
    fn from(c: ShapeCoefficient) -> Self {
        c.0.iter().copied().collect()
    }
}

/// Keypoint observations over a horizon, indexed `(t, i)` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementFile", into = "MeasurementFile")]
pub struct MeasurementSet {
    horizon: usize,
    num_keypoints: usize,
    points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    mask: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MeasurementFile {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N")]
    n: usize,
    y: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<Vec<bool>>>,
}

impl TryFrom<MeasurementFile> for MeasurementSet {
    type Error = Error;

    fn try_from(f: MeasurementFile) -> Result<Self> {
        let check = |len: usize, expected: usize, context: &'static str| {
            if len == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context, expected, actual: len })
            }
        };
        check(f.y.len(), f.t, "measurement frames")?;
        for row in &f.y {
            check(row.len(), f.n, "measurement keypoints")?;
        }
        let points = f.y.iter().flatten().map(|p| Vector3::from(*p)).collect();
        let mut set = MeasurementSet::new(f.t, f.n, points)?;
        if let Some(w) = f.weights {
            check(w.len(), f.t, "weight frames")?;
            for row in &w {
                check(row.len(), f.n, "weight keypoints")?;
            }
            set = set.with_weights(w.into_iter().flatten().collect())?;
        }
        if let Some(m) = f.mask {
            check(m.len(), f.t, "mask frames")?;
            for row in &m {
                check(row.len(), f.n, "mask keypoints")?;
            }
            set = set.with_mask(m.into_iter().flatten().collect())?;
        }
        Ok(set)
    }
}

impl From<MeasurementSet> for MeasurementFile {
    fn from(m: MeasurementSet) -> Self {
        let n = m.num_keypoints;
        MeasurementFile {
            t: m.horizon,
            n,
            y: m.points.chunks(n).map(|r| r.iter().map(|p| (*p).into()).collect()).collect(),
            weights: Some(m.weights.chunks(n).map(<[f64]>::to_vec).collect()),
            mask: Some(m.mask.chunks(n).map(<[bool]>::to_vec).collect()),
        }
    }
}

impl MeasurementSet {
    /// Unit weights, every measurement enabled. `points` is row-major `(t, i)`.
    pub fn new(horizon: usize, num_keypoints: usize, points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != horizon * num_keypoints {
            return Err(Error::DimensionMismatch {
                context: "measurement points",
                expected: horizon * num_keypoints,
                actual: points.len(),
            });
        }
        let len = points.len();
        Ok(MeasurementSet {
            horizon,
            num_keypoints,
            points,
            weights: vec![1.0; len],
            mask: vec![true; len],
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                context: "measurement weights",
                expected: self.points.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("measurement weights must be finite and ≥ 0".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                context: "measurement mask",
                expected: self.points.len(),
                actual: mask.len(),
            });
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_keypoints
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, t: usize, i: usize) -> usize {
        t * self.num_keypoints + i
    }

    pub fn point(&self, t: usize, i: usize) -> &Vector3<f64> {
        &self.points[self.index(t, i)]
    }

    pub fn set_point(&mut self, t: usize, i: usize, y: Vector3<f64>) {
        let idx = self.index(t, i);
        self.points[idx] = y;
    }

    pub fn raw_weight(&self, t: usize, i: usize) -> f64 {
        self.weights[self.index(t, i)]
    }

    pub fn is_active(&self, t: usize, i: usize) -> bool {
        self.mask[self.index(t, i)]
    }

    /// Weight seen by consumers: zero when masked out.
    pub fn effective_weight(&self, t: usize, i: usize) -> f64 {
        let idx = self.index(t, i);
        if self.mask[idx] {
            self.weights[idx]
        } else {
            0.0
        }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Relative weights of the smoothing and prior terms.
///
/// `velocity[t]` and `rotation_rate[t]` weight the change between steps
/// `t` and `t + 1`, so both hold `T − 2` entries for a horizon of `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherWeights {
    pub velocity: Vec<f64>,
    pub rotation_rate: Vec<f64>,
    pub shape: f64,
}

impl SmootherWeights {
    pub fn uniform(horizon: usize, velocity: f64, rotation_rate: f64, shape: f64) -> Self {
        let terms = horizon.saturating_sub(2);
        SmootherWeights {
            velocity: vec![velocity; terms],
            rotation_rate: vec![rotation_rate; terms],
            shape,
        }
    }

    /// No smoothing at all, only the shape prior.
    pub fn unsmoothed(horizon: usize, shape: f64) -> Self {
        Self::uniform(horizon, 0.0, 0.0, shape)
    }

    pub fn validate(&self, horizon: usize, lib: &ShapeLibrary) -> Result<()> {
        let terms = horizon.saturating_sub(2);
        for (len, context) in [
            (self.velocity.len(), "velocity weights"),
            (self.rotation_rate.len(), "rotation-rate weights"),
        ] {
            if len != terms {
                return Err(Error::DimensionMismatch { context, expected: terms, actual: len });
            }
        }
        let all = self.velocity.iter().chain(&self.rotation_rate).chain(std::iter::once(&self.shape));
        if all.clone().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("smoother weights must be finite and ≥ 0".into()));
        }
        if lib.num_models() > lib.num_keypoints() && self.shape <= 0.0 {
            return Err(Error::InvalidInput(
                "shape regularization λ > 0 is required when K > N".into(),
            ));
        }
        Ok(())
    }
}
