//! Certifiable joint shape and pose tracking from 3D keypoints.
//!
//! A fixed-lag smoother over `T` frames estimates the poses, body-frame
//! twists and the active-shape coefficient of a rigid object. The problem is
//! written as a QCQP ([`qcqp`]), relaxed to a semidefinite program and solved
//! globally ([`relax`]); the suboptimality gap of the rounded estimate
//! certifies it. [`robust`] adds outlier pruning and graduated
//! non-convexity on top.

pub mod error;
pub mod metrics;
pub mod objective;
pub mod qcqp;
pub mod relax;
pub mod robust;
pub mod shape;
pub mod simulate;
pub mod so3;
pub mod types;

pub use error::{Error, Result};
pub use metrics::{pose_metrics, PoseMetrics};
pub use objective::evaluate_objective;
pub use shape::{optimal_shape, precompute_shape_operators, reconstruct_keypoints, ShapeOperators};
pub use so3::{geodesic_angle, project_to_so3, Rotation};
pub use types::{MeasurementSet, ObjectState, ShapeCoefficient, ShapeLibrary, SmootherWeights, Trajectory};
