//! Rigid-body transforms on SE(3).
//!
//! Rotations are stored as plain 3×3 matrices so that the orthonormality
//! invariant can be checked and restored explicitly after every update.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Twist `(ω, ν)`: rotation part first, translation part second.
pub type Twist = Vector6<f64>;

/// Orthonormality drift above which [`RigidTransform::compose`] re-projects
/// the rotation onto SO(3).
const REORTHO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `axis_angle` (direction = axis, norm = angle) followed by
    /// translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rodrigues(&axis_angle),
            translation,
        }
    }

    /// Builds from a row-major 3×4 `[R | t]` matrix, rejecting rotations whose
    /// orthonormality error exceeds `tol`.
    pub fn from_rows_3x4(m: &[f64; 12], tol: f64) -> Result<Self> {
        let pose = Self::from_rows_3x4_unchecked(m);
        let err = pose.orthonormality_error();
        if !err.is_finite() || err > tol || pose.rotation.determinant() <= 0.0 {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (error {err:e}, det {:.6})",
                pose.rotation.determinant()
            )));
        }
        Ok(pose)
    }

    pub fn from_rows_3x4_unchecked(m: &[f64; 12]) -> Self {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self {
            rotation,
            translation,
        }
    }

    pub fn to_rows_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut out = RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if out.orthonormality_error() > REORTHO_THRESHOLD {
            out.reorthonormalize();
        }
        out
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.orthonormality_error() <= tol
            && self.rotation.determinant() > 0.0
    }

    /// Projects the rotation back onto SO(3) (nearest rotation in the
    /// Frobenius sense, via SVD).
    pub fn reorthonormalize(&mut self) {
        let svd = self.rotation.svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return;
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        self.rotation = r;
    }

    /// SE(3) exponential of a twist.
    pub fn exp(xi: &Twist) -> RigidTransform {
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let nu = Vector3::new(xi[3], xi[4], xi[5]);
        let theta = omega.norm();
        let k = skew(&omega);
        let k2 = k * k;
        let (a, b, c) = if theta < 1e-8 {
            (
                1.0 - theta * theta / 6.0,
                0.5 - theta * theta / 24.0,
                1.0 / 6.0,
            )
        } else {
            let t2 = theta * theta;
            (
                theta.sin() / theta,
                (1.0 - theta.cos()) / t2,
                (theta - theta.sin()) / (t2 * theta),
            )
        };
        let rotation = Matrix3::identity() + k * a + k2 * b;
        let v = Matrix3::identity() + k * b + k2 * c;
        RigidTransform {
            rotation,
            translation: v * nu,
        }
    }

    /// Left-multiplicative update `exp(ξ) · self`.
    pub fn left_update(&self, xi: &Twist) -> RigidTransform {
        RigidTransform::exp(xi).compose(self)
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        crate::eval_metrics::rotation_error(&self.rotation, &Matrix3::identity())
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix for an axis-angle vector.
pub fn rodrigues(axis_angle: &Vector3<f64>) -> Matrix3<f64> {
    let theta = axis_angle.norm();
    let k = skew(axis_angle);
    if theta < 1e-8 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let t2 = theta * theta;
    Matrix3::identity() + k * (theta.sin() / theta) + k * k * ((1.0 - theta.cos()) / t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn inverse_composes_to_identity() {
        let t = RigidTransform::from_axis_angle(
            Vector3::new(0.3, -0.2, 0.9),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }

    #[test]
    fn exp_of_pure_rotation_matches_rodrigues() {
        let w = Vector3::new(0.1, 0.4, -0.3);
        let xi = Twist::new(w.x, w.y, w.z, 0.0, 0.0, 0.0);
        let t = RigidTransform::exp(&xi);
        assert!((t.rotation - rodrigues(&w)).norm() < 1e-14);
        assert!(t.translation.norm() < 1e-15);
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        let xi_a = Twist::new(1e-9, 0.0, 0.0, 1.0, 0.0, 0.0);
        let xi_b = Twist::new(1.1e-8, 0.0, 0.0, 1.0, 0.0, 0.0);
        let a = RigidTransform::exp(&xi_a);
        let b = RigidTransform::exp(&xi_b);
        assert!((a.rotation - b.rotation).norm() < 1e-7);
        assert!((a.translation.x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reorthonormalize_restores_so3() {
        let mut t = RigidTransform::from_axis_angle(Vector3::new(0.5, 0.1, 0.2), Vector3::zeros());
        t.rotation[(0, 1)] += 1e-4;
        assert!(t.orthonormality_error() > 1e-5);
        t.reorthonormalize();
        assert!(t.orthonormality_error() < 1e-12);
        assert!(t.rotation.determinant() > 0.0);
    }

    #[test]
    fn rows_round_trip() {
        let t = RigidTransform::from_axis_angle(
            Vector3::new(-0.7, 0.2, 0.1),
            Vector3::new(4.0, -1.0, 0.5),
        );
        let back = RigidTransform::from_rows_3x4(&t.to_rows_3x4(), 1e-9).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn rejects_reflection() {
        let mut m = RigidTransform::identity().to_rows_3x4();
        m[10] = -1.0;
        assert!(RigidTransform::from_rows_3x4(&m, 1e-6).is_err());
    }
}
