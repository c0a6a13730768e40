//! Spatial rigid motions, stored as translation plus unit quaternion.

use super::{Pose, Twist};
use crate::scalar::{real, Real};
use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

const SMALL_ANGLE: f64 = 1e-7;

/// Element of SE(3).
///
/// The quaternion is kept unit-norm and sign-canonicalized with `w ≥ 0`
/// (at `w = 0` the first nonzero vector component is made positive), so
/// equal rigid motions compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3<S: Real> {
    pub t: Vector3<S>,
    pub q: UnitQuaternion<S>,
}

fn canonicalize<S: Real>(q: UnitQuaternion<S>) -> UnitQuaternion<S> {
    let c = q.into_inner();
    let flip = if c.w != S::zero() {
        c.w < S::zero()
    } else if c.i != S::zero() {
        c.i < S::zero()
    } else if c.j != S::zero() {
        c.j < S::zero()
    } else {
        c.k < S::zero()
    };
    if flip {
        UnitQuaternion::new_unchecked(-c)
    } else {
        UnitQuaternion::new_unchecked(c)
    }
}

fn skew<S: Real>(v: &Vector3<S>) -> Matrix3<S> {
    Matrix3::new(
        S::zero(),
        -v.z,
        v.y,
        v.z,
        S::zero(),
        -v.x,
        -v.y,
        v.x,
        S::zero(),
    )
}

impl<S: Real> Pose3<S> {
    pub fn new(t: Vector3<S>, q: UnitQuaternion<S>) -> Self {
        let q = UnitQuaternion::new_normalize(q.into_inner());
        Pose3 {
            t,
            q: canonicalize(q),
        }
    }

    /// Planar pose embedded in 3D: translation `(x, y, 0)`, yaw `theta`.
    pub fn from_planar(x: S, y: S, theta: S) -> Self {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        Pose3::new(Vector3::new(x, y, S::zero()), q)
    }

    /// Rotation vector (axis times angle) of the quaternion.
    fn rotation_vector(&self) -> Vector3<S> {
        let c = self.q.into_inner();
        let v = Vector3::new(c.i, c.j, c.k);
        let vn = v.norm();
        if vn < real(1e-9) {
            // small rotation: log q ≈ 2 v / w
            v * (real::<S>(2.0) / c.w)
        } else {
            let angle = real::<S>(2.0) * vn.atan2(c.w);
            v * (angle / vn)
        }
    }
}

impl<S: Real> Pose for Pose3<S> {
    type Scalar = S;
    const DOF: usize = 6;
    const TRANS_DIM: usize = 3;

    fn identity() -> Self {
        Pose3::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    fn compose(&self, rhs: &Self) -> Self {
        // renormalize after every compose so drift never accumulates
        Pose3::new(self.t + self.q * rhs.t, self.q * rhs.q)
    }

    fn inverse(&self) -> Self {
        let qi = self.q.inverse();
        Pose3::new(-(qi * self.t), qi)
    }

    fn log_map(&self) -> Twist<S> {
        let phi = self.rotation_vector();
        let theta2 = phi.norm_squared();
        // V⁻¹ = I - ½[φ]ₓ + c[φ]ₓ², with c -> 1/12 as θ -> 0
        let c = if theta2 < real::<S>(SMALL_ANGLE * SMALL_ANGLE) {
            real::<S>(1.0 / 12.0)
        } else {
            let theta = theta2.sqrt();
            let a = theta.sin() / theta;
            let half = theta / real(2.0);
            let b = (half.sin() / half) * (half.sin() / half) / real(2.0);
            (S::one() - a / (b * real(2.0))) / theta2
        };
        let ph = skew(&phi);
        let v_inv: Matrix3<S> = Matrix3::identity() - ph / real::<S>(2.0) + ph * ph * c;
        let rho = v_inv * self.t;
        DVector::from_vec(vec![rho.x, rho.y, rho.z, phi.x, phi.y, phi.z])
    }

    fn exp_map(v: &Twist<S>) -> Self {
        debug_assert_eq!(v.len(), 6);
        let rho = Vector3::new(v[0], v[1], v[2]);
        let phi = Vector3::new(v[3], v[4], v[5]);
        let theta2 = phi.norm_squared();
        let (q, b, c) = if theta2 < real::<S>(SMALL_ANGLE * SMALL_ANGLE) {
            let q = Quaternion::new(
                S::one(),
                phi.x / real(2.0),
                phi.y / real(2.0),
                phi.z / real(2.0),
            );
            (
                UnitQuaternion::new_normalize(q),
                real::<S>(0.5),
                real::<S>(1.0 / 6.0),
            )
        } else {
            let theta = theta2.sqrt();
            let half = theta / real(2.0);
            let axis = phi / theta;
            let q = Quaternion::from_parts(half.cos(), axis * half.sin());
            let b = (half.sin() / half) * (half.sin() / half) / real(2.0);
            let c = (theta - theta.sin()) / (theta2 * theta);
            (UnitQuaternion::new_normalize(q), b, c)
        };
        let ph = skew(&phi);
        let v_mat = Matrix3::identity() + ph * b + ph * ph * c;
        Pose3::new(v_mat * rho, q)
    }

    fn translation(&self) -> DVector<S> {
        DVector::from_vec(vec![self.t.x, self.t.y, self.t.z])
    }

    fn rotation_angle(&self) -> S {
        let c = self.q.into_inner();
        let vn = Vector3::new(c.i, c.j, c.k).norm();
        real::<S>(2.0) * vn.atan2(c.w.abs())
    }

    fn from_rotation_translation(r: &DMatrix<S>, t: &DVector<S>) -> Self {
        let m = Matrix3::from_fn(|i, j| r[(i, j)]);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        Pose3::new(Vector3::new(t[0], t[1], t[2]), q)
    }
}
