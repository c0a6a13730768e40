//! Planar rigid motions.

use super::{Pose, Twist};
use crate::scalar::{real, Real};
use nalgebra::{DMatrix, DVector, Matrix3};

/// Angle threshold below which series expansions replace the closed forms.
const SMALL_ANGLE: f64 = 1e-7;

/// Element of SE(2): translation in meters, heading in radians.
///
/// `theta` is kept normalized to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2<S: Real> {
    pub x: S,
    pub y: S,
    pub theta: S,
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle<S: Real>(t: S) -> S {
    let pi = S::pi();
    let two_pi = S::two_pi();
    let mut a = t - two_pi * ((t - pi) / two_pi).ceil();
    // guard against rounding at the boundary
    if a > pi {
        a -= two_pi;
    }
    if a <= -pi {
        a += two_pi;
    }
    a
}

/// `sin θ / θ` and `(1 - cos θ) / θ`, stable for small angles.
fn sinc_pair<S: Real>(theta: S) -> (S, S) {
    if theta.abs() < real(SMALL_ANGLE) {
        let t2 = theta * theta;
        (
            S::one() - t2 / real(6.0),
            theta / real(2.0) - t2 * theta / real(24.0),
        )
    } else {
        let half = theta / real(2.0);
        // 1 - cos θ = 2 sin²(θ/2) avoids cancellation
        let b = real::<S>(2.0) * half.sin() * half.sin() / theta;
        (theta.sin() / theta, b)
    }
}

impl<S: Real> Pose2<S> {
    pub fn new(x: S, y: S, theta: S) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Right Jacobian of the exponential map at `tau = [x, y, θ]`.
    pub(crate) fn right_jacobian(tau: &Twist<S>) -> Matrix3<S> {
        let (x, y, theta) = (tau[0], tau[1], tau[2]);
        let (a, b) = sinc_pair(theta);
        let (c_col, d_col) = if theta.abs() < real(SMALL_ANGLE) {
            (
                -y / real(2.0) + theta * x / real(6.0),
                x / real(2.0) + theta * y / real(6.0),
            )
        } else {
            let t2 = theta * theta;
            let (sin_t, cos_t) = (theta.sin(), theta.cos());
            (
                (theta * x - y + y * cos_t - x * sin_t) / t2,
                (x + theta * y - x * cos_t - y * sin_t) / t2,
            )
        };
        Matrix3::new(a, b, c_col, -b, a, d_col, S::zero(), S::zero(), S::one())
    }

    /// Inverse of the right Jacobian, exploiting the `[[M, c], [0, 1]]` block form.
    pub(crate) fn right_jacobian_inv(tau: &Twist<S>) -> Matrix3<S> {
        let j = Self::right_jacobian(tau);
        let (a, b) = (j[(0, 0)], j[(0, 1)]);
        let det = a * a + b * b;
        let (ia, ib) = (a / det, b / det);
        // M⁻¹ for M = [[a, b], [-b, a]]
        let c0 = -(ia * j[(0, 2)] - ib * j[(1, 2)]);
        let c1 = -(ib * j[(0, 2)] + ia * j[(1, 2)]);
        Matrix3::new(ia, -ib, c0, ib, ia, c1, S::zero(), S::zero(), S::one())
    }

    /// Adjoint matrix of this pose for twist ordering `[ρx, ρy, θ]`.
    pub(crate) fn adjoint(&self) -> Matrix3<S> {
        let (s, c) = (self.theta.sin(), self.theta.cos());
        Matrix3::new(c, -s, self.y, s, c, -self.x, S::zero(), S::zero(), S::one())
    }
}

impl<S: Real> Pose for Pose2<S> {
    type Scalar = S;
    const DOF: usize = 3;
    const TRANS_DIM: usize = 2;

    fn identity() -> Self {
        Pose2::new(S::zero(), S::zero(), S::zero())
    }

    fn compose(&self, rhs: &Self) -> Self {
        let (s, c) = (self.theta.sin(), self.theta.cos());
        Pose2::new(
            self.x + c * rhs.x - s * rhs.y,
            self.y + s * rhs.x + c * rhs.y,
            self.theta + rhs.theta,
        )
    }

    fn inverse(&self) -> Self {
        let (s, c) = (self.theta.sin(), self.theta.cos());
        Pose2::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    fn log_map(&self) -> Twist<S> {
        let (a, b) = sinc_pair(self.theta);
        let det = a * a + b * b;
        let rho_x = (a * self.x + b * self.y) / det;
        let rho_y = (-b * self.x + a * self.y) / det;
        DVector::from_vec(vec![rho_x, rho_y, self.theta])
    }

    fn exp_map(v: &Twist<S>) -> Self {
        debug_assert_eq!(v.len(), 3);
        let theta = v[2];
        let (a, b) = sinc_pair(theta);
        Pose2::new(a * v[0] - b * v[1], b * v[0] + a * v[1], theta)
    }

    fn translation(&self) -> DVector<S> {
        DVector::from_vec(vec![self.x, self.y])
    }

    fn rotation_angle(&self) -> S {
        self.theta.abs()
    }

    fn from_rotation_translation(r: &DMatrix<S>, t: &DVector<S>) -> Self {
        Pose2::new(t[0], t[1], r[(1, 0)].atan2(r[(0, 0)]))
    }

    fn error_jacobians(z: &Self, x_from: &Self, x_to: &Self) -> Option<super::JacobianPair<S>> {
        let err = z.between(&x_from.between(x_to));
        let jr_inv = Self::right_jacobian_inv(&err.log_map());
        let j_to = jr_inv;
        // right-perturbing x_from conjugates the perturbation by (x_to⁻¹ x_from)
        let j_from = -jr_inv * x_to.between(x_from).adjoint();
        let to_dmat = |m: Matrix3<S>| DMatrix::from_fn(3, 3, |i, j| m[(i, j)]);
        Some((to_dmat(j_from), to_dmat(j_to)))
    }
}
