//! Dual quaternions, unit dual quaternion poses and the dual-vector algebra of
//! twists, screws and wrenches.
//!
//! A pose is `q̂ = q + ε ½ p ⊗ q` with `p` the world-frame position and `q`
//! the body-to-world rotation. Composition `a ⊗ b` yields the transform that
//! applies `b` inside the frame of `a`, i.e. `p = p_a + R_a p_b`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::quat::{Quaternion, UnitQuaternion};
use crate::{Error, Mat3, Result, Vec3};

/// Tolerance on the unit dual quaternion constraints.
pub const UNIT_DQ_TOLERANCE: f64 = 1e-9;

/// General dual quaternion `real + ε dual`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualQuaternion {
    pub real: Quaternion,
    pub dual: Quaternion,
}

impl DualQuaternion {
    pub const fn new(real: Quaternion, dual: Quaternion) -> Self {
        Self { real, dual }
    }

    pub const fn zero() -> Self {
        Self::new(Quaternion::zero(), Quaternion::zero())
    }

    /// Pure dual quaternion `(0, a) + ε (0, b)`.
    pub fn pure(v: &DualVector) -> Self {
        Self::new(Quaternion::pure(&v.real), Quaternion::pure(&v.dual))
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.real.conjugate(), self.dual.conjugate())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.real.scale(s), self.dual.scale(s))
    }

    pub fn to_array(&self) -> [f64; 8] {
        let r = self.real.to_array();
        let d = self.dual.to_array();
        [r[0], r[1], r[2], r[3], d[0], d[1], d[2], d[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.real.is_finite() && self.dual.is_finite()
    }
}

impl Add for DualQuaternion {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.real + rhs.real, self.dual + rhs.dual)
    }
}

impl Sub for DualQuaternion {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.real - rhs.real, self.dual - rhs.dual)
    }
}

impl Mul<f64> for DualQuaternion {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// Dual product; the `ε²` term is dropped structurally.
impl Mul for DualQuaternion {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.real * rhs.real, self.real * rhs.dual + self.dual * rhs.real)
    }
}

/// Rigid pose on SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDualQuaternion {
    real: UnitQuaternion,
    dual: Quaternion,
}

impl Default for UnitDualQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitDualQuaternion {
    pub const fn identity() -> Self {
        Self { real: UnitQuaternion::identity(), dual: Quaternion::zero() }
    }

    pub fn from_pose(rotation: &UnitQuaternion, translation: &Vec3) -> Self {
        let dual = (Quaternion::pure(translation) * *rotation.quaternion()).scale(0.5);
        Self { real: *rotation, dual }
    }

    /// Same as [`Self::from_pose`] but accepts a raw quaternion, rejecting it
    /// if it is not unit within the rotation tolerance.
    pub fn try_from_pose(rotation: &Quaternion, translation: &Vec3) -> Result<Self> {
        let deviation = (rotation.norm() - 1.0).abs();
        if !(deviation <= crate::quat::ROTATION_TOLERANCE) {
            return Err(Error::NonUnitQuaternion { deviation });
        }
        let q = UnitQuaternion::new_normalize(*rotation)?;
        Ok(Self::from_pose(&q, translation))
    }

    pub fn from_translation(translation: &Vec3) -> Self {
        Self::from_pose(&UnitQuaternion::identity(), translation)
    }

    /// Checks both unit constraints without modifying the input.
    pub fn try_new(dq: DualQuaternion) -> Result<Self> {
        let norm_dev = (dq.real.norm() - 1.0).abs();
        let ortho = dq.real.dot(&dq.dual).abs();
        if !(norm_dev <= UNIT_DQ_TOLERANCE && ortho <= UNIT_DQ_TOLERANCE) {
            return Err(Error::NonUnitDualQuaternion { norm_deviation: norm_dev, orthogonality: ortho });
        }
        Ok(Self { real: UnitQuaternion::try_new(dq.real)?, dual: dq.dual })
    }

    /// Projects an arbitrary dual quaternion onto the unit constraint
    /// manifold: the real part is normalized and the dual part is made
    /// orthogonal to it.
    pub fn normalize(dq: &DualQuaternion) -> Result<Self> {
        let n = dq.real.norm();
        if !(n.is_finite() && n > 0.0) || !dq.dual.is_finite() {
            return Err(Error::DegenerateQuaternion);
        }
        let real = dq.real.scale(1.0 / n);
        let dual = dq.dual.scale(1.0 / n);
        let dual = dual - real.scale(real.dot(&dual));
        Ok(Self { real: UnitQuaternion::new_normalize(real)?, dual })
    }

    pub fn rotation(&self) -> UnitQuaternion {
        self.real
    }

    pub fn real(&self) -> &UnitQuaternion {
        &self.real
    }

    pub fn dual(&self) -> &Quaternion {
        &self.dual
    }

    /// World-frame translation `p = 2 (dual ⊗ real*)`.
    pub fn translation(&self) -> Vec3 {
        (self.dual * self.real.quaternion().conjugate()).vector() * 2.0
    }

    pub fn to_pose(&self) -> (UnitQuaternion, Vec3) {
        (self.real, self.translation())
    }

    pub fn as_dual_quaternion(&self) -> DualQuaternion {
        DualQuaternion::new(*self.real.quaternion(), self.dual)
    }

    pub fn conjugate(&self) -> Self {
        Self { real: self.real.conjugate(), dual: self.dual.conjugate() }
    }

    /// `(| |real| - 1 |, |⟨real, dual⟩|)`.
    pub fn constraint_violation(&self) -> (f64, f64) {
        (
            (self.real.quaternion().norm() - 1.0).abs(),
            self.real.quaternion().dot(&self.dual).abs(),
        )
    }

    /// Maps a body-frame point to the world frame.
    pub fn transform_point(&self, point: &Vec3) -> Vec3 {
        self.real.rotate(point) + self.translation()
    }

    /// Dual exponential `exp(½ δ̂)` of a full displacement `δ̂`.
    ///
    /// The halving happens here, so callers pass the displacement itself.
    /// The result rotates by `‖δ.real‖` about `δ.real` and, for zero
    /// rotation, translates by `δ.dual`. Rotations of `2π` or more are
    /// rejected.
    pub fn exp(delta: &DualVector) -> Result<Self> {
        let angle = delta.real.norm();
        if !(angle < 2.0 * std::f64::consts::PI) {
            return Err(Error::DisplacementTooLarge { angle });
        }
        let ur = delta.real * 0.5;
        let ud = delta.dual * 0.5;
        let theta = 0.5 * angle;
        let (sinc, dsinc) = sinc_and_derivative_ratio(theta);
        let c = theta.cos();
        // dual angle θ_d θ = ⟨u_r, u_d⟩
        let rd = ur.dot(&ud);
        let real = Quaternion::from_parts(c, &(ur * sinc));
        let dual = Quaternion::from_parts(-sinc * rd, &(ud * sinc + ur * (rd * dsinc)));
        Self::normalize(&DualQuaternion::new(real, dual))
    }

    /// Inverse of [`Self::exp`] on its principal domain.
    pub fn log(&self) -> DualVector {
        let q = self.real.canonical();
        let omega = q.log();
        let p = self.translation();
        DualVector::new(omega, se3_left_jacobian_inverse(&omega) * p)
    }

    /// Renormalized product.
    pub fn compose(&self, rhs: &Self) -> Self {
        let raw = self.as_dual_quaternion() * rhs.as_dual_quaternion();
        // both factors satisfy the constraints, so the raw product is finite
        Self::normalize(&raw).unwrap_or(*self)
    }
}

impl Mul for UnitDualQuaternion {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

// sin θ / θ and (θ cos θ − sin θ)/θ³, with series near zero.
fn sinc_and_derivative_ratio(theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-3 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, -1.0 / 3.0 + t2 / 30.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (theta * c - s) / (t2 * theta))
    }
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn se3_left_jacobian_inverse(omega: &Vec3) -> Mat3 {
    let phi = omega.norm();
    let w = skew(omega);
    let coeff = if phi < 1e-4 {
        1.0 / 12.0 + phi * phi / 720.0
    } else {
        let (s, c) = phi.sin_cos();
        (1.0 - phi * s / (2.0 * (1.0 - c))) / (phi * phi)
    };
    Mat3::identity() - w * 0.5 + w * w * coeff
}

/// Pure dual quaternion `real + ε dual` with both scalar parts zero.
///
/// Twists are `ω + ε v_B`, screws `moment + ε direction`, and wrenches
/// `torque + ε force`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualVector {
    pub real: Vec3,
    pub dual: Vec3,
}

impl DualVector {
    pub const fn new(real: Vec3, dual: Vec3) -> Self {
        Self { real, dual }
    }

    pub fn zeros() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros())
    }

    /// `⟨a + εb, c + εd⟩ = a·c + b·d`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.real.dot(&other.real) + self.dual.dot(&other.dual)
    }

    /// `a×c + ε(a×d + b×c)`.
    pub fn cross(&self, other: &Self) -> Self {
        Self::new(
            self.real.cross(&other.real),
            self.real.cross(&other.dual) + self.dual.cross(&other.real),
        )
    }

    /// `(a×c + b×d) + ε(a×d)`.
    pub fn cross_adjoint(&self, other: &Self) -> Self {
        Self::new(
            self.real.cross(&other.real) + self.dual.cross(&other.dual),
            self.real.cross(&other.dual),
        )
    }

    /// Reciprocal (Klein) product `a·d + b·c` of two screws.
    pub fn reciprocal(&self, other: &Self) -> f64 {
        self.real.dot(&other.dual) + self.dual.dot(&other.real)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.real * s, self.dual * s)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.real.iter().chain(self.dual.iter()).all(|c| c.is_finite())
    }
}

impl Add for DualVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.real + rhs.real, self.dual + rhs.dual)
    }
}

impl Sub for DualVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.real - rhs.real, self.dual - rhs.dual)
    }
}

impl Neg for DualVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.real, -self.dual)
    }
}

impl Mul<f64> for DualVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// Dual matrix `A + εB` acting block-wise: `K̂ ∘ (a + εb) = Aa + εBb`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualMatrix {
    pub real: Mat3,
    pub dual: Mat3,
}

impl DualMatrix {
    pub fn new(real: Mat3, dual: Mat3) -> Self {
        Self { real, dual }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Mat3::identity())
    }

    pub fn from_diagonals(real: &Vec3, dual: &Vec3) -> Self {
        Self::new(Mat3::from_diagonal(real), Mat3::from_diagonal(dual))
    }

    pub fn scalar(real: f64, dual: f64) -> Self {
        Self::new(Mat3::identity() * real, Mat3::identity() * dual)
    }

    pub fn apply(&self, v: &DualVector) -> DualVector {
        DualVector::new(self.real * v.real, self.dual * v.dual)
    }

    pub fn is_finite(&self) -> bool {
        self.real.iter().chain(self.dual.iter()).all(|c| c.is_finite())
    }

    /// True when both blocks are diagonal with strictly positive entries.
    pub fn is_positive_diagonal(&self) -> bool {
        let check = |m: &Mat3| {
            (0..3).all(|i| {
                (0..3).all(|j| if i == j { m[(i, j)] > 0.0 } else { m[(i, j)] == 0.0 })
            })
        };
        self.is_finite() && check(&self.real) && check(&self.dual)
    }
}

/// Plücker screw `(r_c × u) + ε u` of the line through `r_c` along the unit
/// direction `u`.
pub fn screw_from_contact(contact_point: &Vec3, direction: &Vec3) -> Result<DualVector> {
    let deviation = (direction.norm() - 1.0).abs();
    if !(deviation <= UNIT_DQ_TOLERANCE) {
        return Err(Error::NonUnitDirection { deviation });
    }
    Ok(DualVector::new(contact_point.cross(direction), *direction))
}
