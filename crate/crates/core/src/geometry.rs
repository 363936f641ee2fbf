//! Rotation and rigid-body primitives shared by all modules.
//!
//! Rotations are stored as unit quaternions with `w >= 0` so that equality
//! tests are well defined. The exp/log maps, slerp and the SO(3) Jacobians
//! are the only Lie machinery the rest of the crate needs; poses interpolate
//! rotation and translation separately.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Seconds since the dataset epoch.
pub type Timestamp = f64;

/// Skew-symmetric matrix of `v`, i.e. `skew(v) * x == v.cross(x)`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A rotation in SO(3), canonicalized so the quaternion scalar part is >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Build from quaternion components; normalizes and canonicalizes sign.
    pub fn from_quat(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::canonical(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn from_matrix(m: &Mat3) -> Self {
        Self::canonical(UnitQuaternion::from_matrix(m))
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        if q.w < 0.0 {
            Rotation(UnitQuaternion::new_unchecked(-q.into_inner()))
        } else {
            Rotation(q)
        }
    }

    /// Rodrigues exponential map. `phi` with norm near 2*pi wraps naturally
    /// through the quaternion half-angle.
    pub fn exp(phi: &Vec3) -> Self {
        Self::canonical(UnitQuaternion::from_scaled_axis(*phi))
    }

    /// Axis-angle logarithm with angle in [0, pi].
    ///
    /// With `w >= 0` the quaternion form never crosses the antipode, so the
    /// near-pi branch stays well conditioned (the vector part has norm ~1
    /// there; no trace-based cancellation is involved).
    pub fn log(&self) -> Vec3 {
        let q = &self.0;
        let vn = libm::sqrt(q.i * q.i + q.j * q.j + q.k * q.k);
        if vn < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * libm::atan2(vn, q.w);
        Vector3::new(q.i, q.j, q.k) * (angle / vn)
    }

    pub fn matrix(&self) -> Mat3 {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn quaternion(&self) -> (f64, f64, f64, f64) {
        let q = &self.0;
        (q.w, q.i, q.j, q.k)
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.0.inverse())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self::canonical(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle of `self` in [0, pi].
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Self::canonical(UnitQuaternion::from_axis_angle(
            &Unit::new_normalize(*axis),
            angle,
        ))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Spherical linear interpolation `Ra * Exp(s * Log(Ra^-1 * Rb))`.
pub fn slerp(a: &Rotation, b: &Rotation, s: f64) -> Rotation {
    let rel = a.inverse().compose(b).log();
    a.compose(&Rotation::exp(&(rel * s)))
}

/// Right Jacobian of SO(3) at `phi`.
pub fn right_jacobian(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let w = skew(phi);
    if theta < 1e-7 {
        return Mat3::identity() - 0.5 * w + w * w / 6.0;
    }
    let t2 = theta * theta;
    Mat3::identity() - w * ((1.0 - libm::cos(theta)) / t2)
        + w * w * ((theta - libm::sin(theta)) / (t2 * theta))
}

/// Inverse of the right Jacobian of SO(3) at `phi`.
pub fn right_jacobian_inv(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let w = skew(phi);
    if theta < 1e-7 {
        return Mat3::identity() + 0.5 * w + w * w / 12.0;
    }
    let half = 0.5 * theta;
    let cot = libm::cos(half) / libm::sin(half);
    Mat3::identity() + 0.5 * w + w * w * ((1.0 - half * cot) / (theta * theta))
}

/// Left Jacobian: `Jl(phi) = Jr(-phi)`.
pub fn left_jacobian(phi: &Vec3) -> Mat3 {
    right_jacobian(&(-phi))
}

pub fn left_jacobian_inv(phi: &Vec3) -> Mat3 {
    right_jacobian_inv(&(-phi))
}

/// Rigid-body transform: rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, f: &Vec3) -> Vec3 {
        self.rotation.rotate(f) + self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }

    /// Relative transform `self^-1 * other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation via slerp, translation via linear blend.
pub fn pose_interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
    Pose {
        rotation: slerp(&a.rotation, &b.rotation, s),
        translation: a.translation * (1.0 - s) + b.translation * s,
    }
}
