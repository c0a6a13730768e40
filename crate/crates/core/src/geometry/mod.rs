//! Rigid-motion types and manifold operations.
//!
//! Everything downstream (graph model, consistency checks, optimizer,
//! evaluation) is written against the [`Pose`] trait so the same pipeline
//! runs on planar and spatial problems with either `f32` or `f64` scalars.

mod se2;
mod se3;

pub use se2::Pose2;
pub use se3::Pose3;

use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::fmt::Debug;

/// Tangent-space vector. Dimension 3 for SE(2), 6 for SE(3);
/// translation components in meters, rotation in radians.
pub type Twist<S> = DVector<S>;

/// Jacobians of an edge residual with respect to its two endpoint poses.
pub type JacobianPair<S> = (DMatrix<S>, DMatrix<S>);

/// A rigid motion: an element of SE(2) or SE(3).
pub trait Pose: Clone + Debug + PartialEq + Send + Sync + 'static {
    type Scalar: Real;

    /// Tangent-space dimension (3 or 6).
    const DOF: usize;
    /// Translation dimension (2 or 3).
    const TRANS_DIM: usize;

    fn identity() -> Self;

    /// Group composition `self · rhs`.
    fn compose(&self, rhs: &Self) -> Self;

    fn inverse(&self) -> Self;

    /// Relative pose `self⁻¹ · rhs`, so that `compose(self, between(self, rhs)) = rhs`.
    fn between(&self, rhs: &Self) -> Self {
        self.inverse().compose(rhs)
    }

    /// Logarithm map. Defined away from rotation angle π; at exactly π the
    /// positive-axis branch is taken (see the concrete impls).
    fn log_map(&self) -> Twist<Self::Scalar>;

    /// Exponential map (total).
    fn exp_map(v: &Twist<Self::Scalar>) -> Self;

    fn translation(&self) -> DVector<Self::Scalar>;

    /// Rotation magnitude in `[0, π]`.
    fn rotation_angle(&self) -> Self::Scalar;

    /// Build a pose from a `TRANS_DIM`-square rotation matrix and a translation.
    fn from_rotation_translation(r: &DMatrix<Self::Scalar>, t: &DVector<Self::Scalar>) -> Self;

    /// Analytic Jacobians of the edge residual
    /// `log(between(z, between(x_from, x_to)))` with respect to right
    /// perturbations of `x_from` and `x_to`. `None` means the caller must
    /// fall back to finite differences.
    fn error_jacobians(z: &Self, x_from: &Self, x_to: &Self) -> Option<JacobianPair<Self::Scalar>> {
        let _ = (z, x_from, x_to);
        None
    }

    /// Distance-like closeness test used by tests and invariant checks.
    fn is_close(&self, other: &Self, tol: Self::Scalar) -> bool {
        self.between(other).log_map().norm() <= tol
    }
}
