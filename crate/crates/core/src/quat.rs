//! Quaternion algebra.
//!
//! Components are stored scalar-first, `(w, x, y, z)`, everywhere in this
//! crate including the CSV outputs. A quaternion with `w = 0` is used as the
//! pure-quaternion embedding of a 3-vector.

use std::ops::{Add, Mul, Neg, Sub};

use crate::{Error, Result, Vec3};

/// Tolerance on `| |q| - 1 |` enforced by [`UnitQuaternion`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Looser tolerance used when a caller hands in an arbitrary quaternion to be
/// used as a rotation. Anything beyond this means normalization was skipped.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rotation angles closer than this to π are treated as the antipode by [`UnitQuaternion::log`].
const ANTIPODE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vec3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_parts(w: f64, v: &Vec3) -> Self {
        Self::new(w, v.x, v.y, v.z)
    }

    pub fn scalar(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Four-dimensional Euclidean inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates `v` by `q ⊗ v ⊗ q*`, rejecting quaternions that are not unit
    /// within [`ROTATION_TOLERANCE`].
    pub fn rotate_checked(&self, v: &Vec3) -> Result<Vec3> {
        let deviation = (self.norm() - 1.0).abs();
        if !(deviation <= ROTATION_TOLERANCE) {
            return Err(Error::NonUnitQuaternion { deviation });
        }
        Ok(rotate_raw(self, v))
    }
}

impl Add for Quaternion {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.w + rhs.w, self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Quaternion {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.w - rhs.w, self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Quaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

// q ⊗ v ⊗ q* without normalization, via t = 2 q_v × v.
fn rotate_raw(q: &Quaternion, v: &Vec3) -> Vec3 {
    let qv = q.vector();
    let t = 2.0 * qv.cross(v);
    v + q.w * t + qv.cross(&t)
}

/// A rotation, i.e. a quaternion on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion(Quaternion);

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    pub const fn identity() -> Self {
        Self(Quaternion::identity())
    }

    /// Normalizes `q`. Fails on zero or non-finite input.
    pub fn new_normalize(q: Quaternion) -> Result<Self> {
        let n = q.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::DegenerateQuaternion);
        }
        Ok(Self(q.scale(1.0 / n)))
    }

    /// Wraps `q` if it is already unit within [`UNIT_TOLERANCE`].
    pub fn try_new(q: Quaternion) -> Result<Self> {
        let deviation = (q.norm() - 1.0).abs();
        if !(deviation <= UNIT_TOLERANCE) {
            return Err(Error::NonUnitQuaternion { deviation });
        }
        Ok(Self(q))
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::DegenerateQuaternion);
        }
        let half = 0.5 * angle;
        Ok(Self(Quaternion::from_parts(half.cos(), &(axis * (half.sin() / n)))))
    }

    /// Exponential map from a rotation vector (axis times angle).
    pub fn exp(v: &Vec3) -> Self {
        let angle = v.norm();
        let half = 0.5 * angle;
        // sin(θ/2)/θ, series below the cutoff
        let k = if angle < 1e-4 {
            0.5 - angle * angle / 48.0
        } else {
            half.sin() / angle
        };
        let q = Quaternion::from_parts(half.cos(), &(v * k));
        // exact up to rounding; renormalize to keep the invariant tight
        Self(q.scale(1.0 / q.norm()))
    }

    /// Logarithm to a rotation vector on the principal branch.
    ///
    /// The sign is canonicalized to `w >= 0` first, so the returned angle lies
    /// in `[0, π]`. At the antipode (angle within 1e-9 of π) both `±axis`
    /// describe the same rotation; the axis is chosen so that its
    /// largest-magnitude component is positive.
    pub fn log(&self) -> Vec3 {
        let q = self.canonical().0;
        let v = q.vector();
        let s = v.norm();
        if s < 1e-8 {
            // θ ≈ 2 s / w; second-order term keeps the roundtrip below 1e-12
            return v * (2.0 / q.w) * (1.0 - s * s / (3.0 * q.w * q.w));
        }
        let angle = 2.0 * s.atan2(q.w);
        let axis = v / s;
        if std::f64::consts::PI - angle < ANTIPODE_TOLERANCE {
            let imax = axis.iamax();
            let sign = if axis[imax] < 0.0 { -1.0 } else { 1.0 };
            return axis * (sign * std::f64::consts::PI);
        }
        axis * angle
    }

    pub fn quaternion(&self) -> &Quaternion {
        &self.0
    }

    pub fn into_inner(self) -> Quaternion {
        self.0
    }

    pub fn w(&self) -> f64 {
        self.0.w
    }

    pub fn vector(&self) -> Vec3 {
        self.0.vector()
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.conjugate())
    }

    /// Returns `q` or `-q`, whichever has a non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.0.w < 0.0 {
            Self(-self.0)
        } else {
            *self
        }
    }

    /// `q ⊙ v = q ⊗ v ⊗ q*`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        rotate_raw(&self.0, v)
    }

    /// `q* ⊙ v`.
    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        rotate_raw(&self.0.conjugate(), v)
    }

    pub fn to_rotation_matrix(&self) -> crate::Mat3 {
        let Quaternion { w, x, y, z } = self.0;
        crate::Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Re-projects onto the unit sphere, removing accumulated rounding drift.
    pub fn renormalize(&self) -> Self {
        Self(self.0.scale(1.0 / self.0.norm()))
    }
}

impl Mul for UnitQuaternion {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(q: UnitQuaternion) -> Self {
        q.0
    }
}
