//! Synthetic constant-twist trajectories, keypoint measurements and outliers.

use nalgebra::{DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::Rotation;
use crate::types::{MeasurementSet, ObjectState, ShapeCoefficient, ShapeLibrary, Trajectory};

/// Default characteristic length of the synthetic object, meters.
pub const DEFAULT_LENGTH_SCALE: f64 = 0.2;

/// Noise and outlier model for one synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Std of the isotropic keypoint noise, meters.
    pub measurement_sigma: f64,
    /// Std of the per-step velocity perturbation, meters/step.
    pub velocity_sigma: f64,
    /// Std of each axis-angle component of the rotation-rate perturbation, radians/step.
    pub rotation_rate_sigma: f64,
    pub outlier_ratio: f64,
    /// Std of outliers about the object centroid, meters.
    pub outlier_sigma: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            measurement_sigma: 0.05 * DEFAULT_LENGTH_SCALE,
            velocity_sigma: 0.01,
            rotation_rate_sigma: 0.01,
            outlier_ratio: 0.0,
            outlier_sigma: DEFAULT_LENGTH_SCALE,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            measurement_sigma: 0.0,
            velocity_sigma: 0.0,
            rotation_rate_sigma: 0.0,
            outlier_ratio: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.measurement_sigma,
            self.velocity_sigma,
            self.rotation_rate_sigma,
            self.outlier_sigma,
        ];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput("noise sigmas must be finite and ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidInput(format!(
                "outlier ratio {} outside [0, 1]",
                self.outlier_ratio
            )));
        }
        Ok(())
    }
}

/// Where the shape library of a scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LibrarySource {
    #[default]
    Bundled,
    Path(std::path::PathBuf),
}

impl LibrarySource {
    pub fn load(&self) -> Result<ShapeLibrary> {
        match self {
            LibrarySource::Bundled => Ok(ShapeLibrary::bundled()),
            LibrarySource::Path(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::InvalidInput(format!("reading library {}: {e}", path.display()))
                })?;
                ShapeLibrary::from_json(&text)
            }
        }
    }
}

/// Geometry and motion of a synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub library: LibrarySource,
    pub characteristic_length: f64,
    /// Initial body velocity; a random direction of length `speed` when absent.
    pub initial_velocity: Option<[f64; 3]>,
    /// Initial rotation rate as axis-angle; a random axis with angle `turn_rate` when absent.
    pub initial_rotation_rate: Option<[f64; 3]>,
    /// Meters per step.
    pub speed: f64,
    /// Radians per step.
    pub turn_rate: f64,
    /// Ground-truth shape on the simplex; Dirichlet(1) sample when absent.
    pub shape: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            horizon: 8,
            library: LibrarySource::Bundled,
            characteristic_length: DEFAULT_LENGTH_SCALE,
            initial_velocity: None,
            initial_rotation_rate: None,
            speed: 0.02,
            turn_rate: 0.1,
            shape: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::HorizonTooShort(self.horizon));
        }
        if !(self.characteristic_length > 0.0) {
            return Err(Error::InvalidInput("characteristic length must be positive".into()));
        }
        if let Some(c) = &self.shape {
            let sum: f64 = c.iter().sum();
            if c.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("ground-truth shape must lie on the simplex".into()));
            }
        }
        Ok(())
    }
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::from_fn(|_, _| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
}

/// One step of the constant-twist dynamics with sampled twist perturbations.
pub fn propagate_state<R: Rng + ?Sized>(state: &ObjectState, noise: &NoiseConfig, rng: &mut R) -> ObjectState {
    let velocity_noise = gaussian_vector(rng, noise.velocity_sigma);
    let rate_noise = Rotation::from_axis_angle(&gaussian_vector(rng, noise.rotation_rate_sigma));
    ObjectState {
        rotation: state.rotation.compose(&state.rotation_rate),
        position: state.position + state.rotation * state.velocity,
        velocity: state.velocity + velocity_noise,
        rotation_rate: state.rotation_rate.compose(&rate_noise),
    }
}

/// Rolls `initial` forward to a trajectory of `horizon` states.
pub fn generate_trajectory<R: Rng + ?Sized>(
    initial: ObjectState,
    horizon: usize,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Trajectory {
    let mut states = Vec::with_capacity(horizon);
    let mut state = initial;
    for _ in 0..horizon {
        states.push(state);
        state = propagate_state(&state, noise, rng);
    }
    Trajectory::new(states)
}

/// Keypoint measurements `y = R·B_i·c + p + ε`, all active with unit weight.
pub fn sample_measurements<R: Rng + ?Sized>(
    traj: &Trajectory,
    lib: &ShapeLibrary,
    c: &ShapeCoefficient,
    noise: &NoiseConfig,
    rng: &mut R,
) -> MeasurementSet {
    let shape: Vec<Vector3<f64>> = crate::shape::reconstruct_keypoints(lib, c);
    let points = traj
        .states
        .iter()
        .flat_map(|s| shape.iter().map(move |x| s.rotation * *x + s.position))
        .map(|y| y + gaussian_vector(rng, noise.measurement_sigma))
        .collect();
    MeasurementSet::new(traj.horizon(), lib.num_keypoints(), points)
        .expect("dimensions follow from the trajectory and library")
}

/// Replaces `round(ratio·T·N)` uniformly chosen measurements with points drawn
/// about the object centroid. Returns the corrupted set and the per-cell
/// ground-truth outlier flags.
pub fn inject_outliers<R: Rng + ?Sized>(
    meas: &MeasurementSet,
    traj: &Trajectory,
    lib: &ShapeLibrary,
    c: &ShapeCoefficient,
    noise: &NoiseConfig,
    rng: &mut R,
) -> (MeasurementSet, Vec<bool>) {
    let total = meas.len();
    let count = ((noise.outlier_ratio * total as f64).round() as usize).min(total);
    let mut cells: Vec<usize> = (0..total).collect();
    cells.shuffle(rng);
    let mut chosen = cells[..count].to_vec();
    chosen.sort_unstable();

    let shape = crate::shape::reconstruct_keypoints(lib, c);
    let body_centroid = shape.iter().sum::<Vector3<f64>>() / shape.len() as f64;

    let mut out = meas.clone();
    let mut is_outlier = vec![false; total];
    let n = meas.num_keypoints();
    for idx in chosen {
        let (t, i) = (idx / n, idx % n);
        let s = &traj.states[t];
        let centroid = s.rotation * body_centroid + s.position;
        out.set_point(t, i, centroid + gaussian_vector(rng, noise.outlier_sigma));
        is_outlier[idx] = true;
    }
    (out, is_outlier)
}

/// Symmetric Dirichlet(1) draw: uniform on the simplex.
pub fn sample_simplex_shape<R: Rng + ?Sized>(num_models: usize, rng: &mut R) -> ShapeCoefficient {
    assert!(num_models >= 1, "need at least one model");
    if num_models == 1 {
        return ShapeCoefficient::vertex(1, 0);
    }
    let draws: Vec<f64> = (0..num_models).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    ShapeCoefficient::new_unchecked(DVector::from_iterator(num_models, draws.into_iter().map(|d| d / sum)))
}

/// A complete synthetic instance with its ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub library: ShapeLibrary,
    pub truth: Trajectory,
    pub shape: ShapeCoefficient,
    pub measurements: MeasurementSet,
    pub outliers: Vec<bool>,
    pub characteristic_length: f64,
}

impl Scenario {
    /// Draws a scenario; every random choice comes from `noise.rng_seed`.
    pub fn generate(config: &ScenarioConfig, library: &ShapeLibrary, noise: &NoiseConfig) -> Result<Self> {
        config.validate()?;
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);

        let shape = match &config.shape {
            Some(c) => {
                if c.len() != library.num_models() {
                    return Err(Error::DimensionMismatch {
                        context: "scenario shape",
                        expected: library.num_models(),
                        actual: c.len(),
                    });
                }
                ShapeCoefficient::try_from(c.clone())?
            }
            None => sample_simplex_shape(library.num_models(), &mut rng),
        };

        let random_direction = |rng: &mut ChaCha8Rng| {
            let v = gaussian_vector(rng, 1.0);
            v / v.norm().max(f64::MIN_POSITIVE)
        };
        let velocity = match config.initial_velocity {
            Some(v) => Vector3::from(v),
            None => config.speed * random_direction(&mut rng),
        };
        let rate = match config.initial_rotation_rate {
            Some(w) => Vector3::from(w),
            None => config.turn_rate * random_direction(&mut rng),
        };
        let initial = ObjectState {
            rotation: Rotation::random(&mut rng),
            position: gaussian_vector(&mut rng, config.characteristic_length),
            velocity,
            rotation_rate: Rotation::from_axis_angle(&rate),
        };

        let truth = generate_trajectory(initial, config.horizon, noise, &mut rng);
        let clean = sample_measurements(&truth, library, &shape, noise, &mut rng);
        let (measurements, outliers) = inject_outliers(&clean, &truth, library, &shape, noise, &mut rng);
        Ok(Scenario {
            library: library.clone(),
            truth,
            shape,
            measurements,
            outliers,
            characteristic_length: config.characteristic_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::evaluate_objective;
    use crate::types::SmootherWeights;
    use std::f64::consts::FRAC_PI_2;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn stationary_state_is_fixed() {
        let s = ObjectState::new(Rotation::about_z(0.3), Vector3::new(1.0, 2.0, 3.0));
        let next = propagate_state(&s, &NoiseConfig::noiseless(), &mut rng());
        assert_eq!(next.position, s.position);
        assert!((next.rotation.matrix() - s.rotation.matrix()).amax() < 1e-15);
    }

    #[test]
    fn pure_translation_is_a_straight_line() {
        let mut s = ObjectState::new(Rotation::about_z(FRAC_PI_2), Vector3::zeros());
        s.velocity = Vector3::new(1.0, 0.0, 0.0);
        let traj = generate_trajectory(s, 5, &NoiseConfig::noiseless(), &mut rng());
        for (t, st) in traj.states.iter().enumerate() {
            assert!((st.position - Vector3::new(0.0, t as f64, 0.0)).amax() < 1e-12);
        }
    }

    #[test]
    fn quarter_turns_close_a_square() {
        let mut s = ObjectState::new(Rotation::identity(), Vector3::zeros());
        s.velocity = Vector3::new(1.0, 0.0, 0.0);
        s.rotation_rate = Rotation::about_z(FRAC_PI_2);
        let traj = generate_trajectory(s, 5, &NoiseConfig::noiseless(), &mut rng());
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        for (st, (x, y)) in traj.states.iter().zip(corners) {
            assert!((st.position - Vector3::new(x, y, 0.0)).amax() < 1e-12);
        }
        assert!(traj.dynamics_residual() < 1e-12);
    }

    #[test]
    fn propagation_keeps_rotations_valid() {
        let mut r = rng();
        let mut s = ObjectState::new(Rotation::random(&mut r), Vector3::zeros());
        s.rotation_rate = Rotation::from_axis_angle(&Vector3::new(0.1, -0.2, 0.05));
        let noise = NoiseConfig::default();
        for _ in 0..1000 {
            s = propagate_state(&s, &noise, &mut r);
        }
        for rot in [s.rotation, s.rotation_rate] {
            let m = rot.matrix();
            assert!((m.transpose() * m - nalgebra::Matrix3::identity()).amax() < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let lib = ShapeLibrary::bundled();
        let mut r = rng();
        let c = sample_simplex_shape(4, &mut r);
        let mut s = ObjectState::new(Rotation::random(&mut r), Vector3::new(0.1, 0.2, 0.3));
        s.velocity = Vector3::new(0.02, 0.0, 0.01);
        let traj = generate_trajectory(s, 4, &NoiseConfig::noiseless(), &mut r);
        let meas = sample_measurements(&traj, &lib, &c, &NoiseConfig::noiseless(), &mut r);
        for (t, st) in traj.states.iter().enumerate() {
            for i in 0..10 {
                let expected = st.rotation * (lib.block(i) * c.as_vector()) + st.position;
                assert_eq!(*meas.point(t, i), expected);
            }
        }
        let weights = SmootherWeights::uniform(4, 1.0, 1.0, 0.0);
        assert!(evaluate_objective(&traj, &c, &lib, &meas, &weights).unwrap() < 1e-18);
    }

    #[test]
    fn identity_pose_vertex_shape_reproduces_model() {
        let lib = ShapeLibrary::bundled();
        let traj = Trajectory::new(vec![ObjectState::new(Rotation::identity(), Vector3::zeros()); 2]);
        let c = ShapeCoefficient::vertex(4, 2);
        let meas = sample_measurements(&traj, &lib, &c, &NoiseConfig::noiseless(), &mut rng());
        for i in 0..10 {
            assert_eq!(*meas.point(1, i), lib.point(i, 2));
        }
    }

    #[test]
    fn measurement_noise_variance() {
        let lib = ShapeLibrary::from_models(&[vec![Vector3::zeros()]]).unwrap();
        let traj = Trajectory::new(vec![ObjectState::new(Rotation::identity(), Vector3::zeros()); 100_000]);
        let noise = NoiseConfig { measurement_sigma: 0.3, ..NoiseConfig::noiseless() };
        let meas = sample_measurements(&traj, &lib, &ShapeCoefficient::mean(1), &noise, &mut rng());
        let n = meas.len() as f64;
        for axis in 0..3 {
            let mean = meas.points().iter().map(|p| p[axis]).sum::<f64>() / n;
            let var = meas.points().iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var / 0.09 - 1.0).abs() < 0.05, "variance {var}");
        }
    }

    fn outlier_fixture(ratio: f64) -> (MeasurementSet, MeasurementSet, Vec<bool>) {
        let lib = ShapeLibrary::bundled();
        let mut r = rng();
        let c = ShapeCoefficient::mean(4);
        let traj = generate_trajectory(
            ObjectState::new(Rotation::identity(), Vector3::zeros()),
            10,
            &NoiseConfig::noiseless(),
            &mut r,
        );
        let meas = sample_measurements(&traj, &lib, &c, &NoiseConfig::noiseless(), &mut r);
        let noise = NoiseConfig { outlier_ratio: ratio, ..NoiseConfig::default() };
        let (out, mask) = inject_outliers(&meas, &traj, &lib, &c, &noise, &mut r);
        (meas, out, mask)
    }

    #[test]
    fn outlier_counts() {
        let (meas, out, mask) = outlier_fixture(0.0);
        assert_eq!(out, meas);
        assert!(mask.iter().all(|&m| !m));

        let (meas, out, mask) = outlier_fixture(1.0);
        assert!(mask.iter().all(|&m| m));
        assert!(meas.points().iter().zip(out.points()).all(|(a, b)| a != b));

        let (meas, out, mask) = outlier_fixture(0.5);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 50);
        for (idx, &flag) in mask.iter().enumerate() {
            if !flag {
                assert_eq!(meas.points()[idx], out.points()[idx]);
            }
        }
        assert_eq!(out.weights(), meas.weights());
        assert_eq!(out.mask(), meas.mask());
    }

    #[test]
    fn simplex_samples() {
        let mut r = rng();
        assert_eq!(sample_simplex_shape(1, &mut r).as_vector()[0], 1.0);
        let k = 4;
        let draws = 100_000;
        let mut mean = DVector::zeros(k);
        for _ in 0..draws {
            let c = sample_simplex_shape(k, &mut r);
            assert!((c.as_vector().sum() - 1.0).abs() < 1e-12);
            assert!(!c.has_negative());
            mean += c.as_vector();
        }
        mean /= draws as f64;
        assert!(mean.iter().all(|m| (m - 0.25).abs() < 0.01));
    }

    #[test]
    fn scenario_is_deterministic_per_seed() {
        let lib = ShapeLibrary::bundled();
        let cfg = ScenarioConfig::default();
        let noise = NoiseConfig { outlier_ratio: 0.2, rng_seed: 5, ..Default::default() };
        let a = Scenario::generate(&cfg, &lib, &noise).unwrap();
        let b = Scenario::generate(&cfg, &lib, &noise).unwrap();
        assert_eq!(a.measurements, b.measurements);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.horizon(), 8);
        assert!(a.truth.dynamics_residual() < 1e-12);
        let bad = ScenarioConfig { horizon: 1, ..Default::default() };
        assert!(matches!(Scenario::generate(&bad, &lib, &noise), Err(Error::HorizonTooShort(1))));
    }
}
