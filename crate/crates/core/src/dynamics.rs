//! Rigid-body parameters and flight dynamics in the classical
//! `(p, v, q, ω)` form and in the dual `(q̂, ξ̂)` form.

use serde::{Deserialize, Serialize};

use crate::dualquat::{DualQuaternion, DualVector, UnitDualQuaternion};
use crate::quat::{Quaternion, UnitQuaternion};
use crate::{Error, Mat3, Result, Vec3};

/// Down-positive vertical axis, shared by the world and body frames.
pub fn e_z() -> Vec3 {
    Vec3::z()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodySpec", into = "BodySpec")]
pub struct BodyParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
    gravity: f64,
}

/// Serialized form of [`BodyParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    /// kg
    pub mass: f64,
    /// kg·m², row-major 3×3
    pub inertia: [[f64; 3]; 3],
    /// m/s²
    pub gravity: f64,
}

impl TryFrom<BodySpec> for BodyParams {
    type Error = Error;
    fn try_from(spec: BodySpec) -> Result<Self> {
        let rows = spec.inertia;
        let inertia = Mat3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0], rows[2][1],
            rows[2][2],
        );
        Self::new(spec.mass, inertia, spec.gravity)
    }
}

impl From<BodyParams> for BodySpec {
    fn from(b: BodyParams) -> Self {
        let m = b.inertia;
        BodySpec {
            mass: b.mass,
            inertia: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            gravity: b.gravity,
        }
    }
}

impl BodyParams {
    /// Validates `mass > 0`, a symmetric positive-definite inertia and a
    /// finite non-negative gravity magnitude.
    pub fn new(mass: f64, inertia: Mat3, gravity: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidBody(format!("mass must be positive, got {mass}")));
        }
        if !(gravity.is_finite() && gravity >= 0.0) {
            return Err(Error::InvalidBody(format!("gravity must be finite and non-negative, got {gravity}")));
        }
        if !inertia.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidBody("inertia has non-finite entries".into()));
        }
        let asym = (inertia - inertia.transpose()).abs().max();
        if asym > 1e-12 * inertia.abs().max() {
            return Err(Error::InvalidBody(format!("inertia is not symmetric (max asymmetry {asym:e})")));
        }
        let eig = nalgebra::SymmetricEigen::new(inertia);
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::InvalidBody(format!("inertia is not positive definite (min eigenvalue {min:e})")));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::InvalidBody("inertia is singular".into()))?;
        // keep the inverse exactly symmetric
        let inertia_inv = (inertia_inv + inertia_inv.transpose()) * 0.5;
        Ok(Self { mass, inertia, inertia_inv, gravity })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn with_gravity(&self, gravity: f64) -> Result<Self> {
        Self::new(self.mass, self.inertia, gravity)
    }

    /// Same body with the inertia scaled by `factor`.
    pub fn with_scaled_inertia(&self, factor: f64) -> Result<Self> {
        Self::new(self.mass, self.inertia * factor, self.gravity)
    }

    pub fn dual_inertia(&self) -> DualInertia {
        DualInertia { inertia: self.inertia, inertia_inv: self.inertia_inv, mass: self.mass }
    }
}

/// Dual inertia operator `M(ω + ε v) = Jω + ε m v` and its exact inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualInertia {
    inertia: Mat3,
    inertia_inv: Mat3,
    mass: f64,
}

impl DualInertia {
    pub fn apply(&self, twist: &DualVector) -> DualVector {
        DualVector::new(self.inertia * twist.real, twist.dual * self.mass)
    }

    pub fn apply_inverse(&self, wrench: &DualVector) -> DualVector {
        DualVector::new(self.inertia_inv * wrench.real, wrench.dual / self.mass)
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `½⟨ξ̂, M(ξ̂)⟩`.
    pub fn kinetic_energy(&self, twist: &DualVector) -> f64 {
        0.5 * twist.dot(&self.apply(twist))
    }
}

/// `(p^W, v^W, q, ω^B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: UnitQuaternion,
    pub angular_velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quaternion,
    pub angular_velocity: Vec3,
}

impl ClassicState {
    pub fn to_dual(&self) -> DualState {
        DualState {
            pose: UnitDualQuaternion::from_pose(&self.attitude, &self.position),
            twist: DualVector::new(self.angular_velocity, self.attitude.inverse_rotate(&self.velocity)),
        }
    }

    /// One RK4 step of the classical dynamics with inputs evaluated at each
    /// stage. The attitude is renormalized after the step.
    pub fn rk4_step(&self, dt: f64, body: &BodyParams, mut input: impl FnMut(&ClassicState) -> (f64, Vec3)) -> Self {
        let mut eval = |s: &ClassicState| {
            let (f, tau) = input(s);
            classic_derivative(s, f, &tau, body)
        };
        let shifted = |k: &ClassicDerivative, h: f64| ClassicState {
            position: self.position + k.position * h,
            velocity: self.velocity + k.velocity * h,
            attitude: UnitQuaternion::new_normalize(*self.attitude.quaternion() + k.attitude * h)
                .unwrap_or(self.attitude),
            angular_velocity: self.angular_velocity + k.angular_velocity * h,
        };
        let k1 = eval(self);
        let k2 = eval(&shifted(&k1, 0.5 * dt));
        let k3 = eval(&shifted(&k2, 0.5 * dt));
        let k4 = eval(&shifted(&k3, dt));
        let w = dt / 6.0;
        let q = *self.attitude.quaternion()
            + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * w;
        ClassicState {
            position: self.position + (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * w,
            velocity: self.velocity + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * w,
            attitude: UnitQuaternion::new_normalize(q).unwrap_or(self.attitude),
            angular_velocity: self.angular_velocity
                + (k1.angular_velocity + 2.0 * k2.angular_velocity + 2.0 * k3.angular_velocity + k4.angular_velocity)
                    * w,
        }
    }
}

/// Classical flight dynamics with scalar thrust `f` (acting along `-e_z^B`)
/// and body torque `τ`.
pub fn classic_derivative(s: &ClassicState, thrust: f64, torque: &Vec3, body: &BodyParams) -> ClassicDerivative {
    let omega = s.angular_velocity;
    let j_omega = body.inertia * omega;
    ClassicDerivative {
        position: s.velocity,
        velocity: body.gravity * e_z() - (thrust / body.mass) * s.attitude.rotate(&e_z()),
        attitude: (*s.attitude.quaternion() * Quaternion::pure(&omega)).scale(0.5),
        angular_velocity: body.inertia_inv * (torque - omega.cross(&j_omega)),
    }
}

/// `(q̂, ξ̂)` with `ξ̂ = ω + ε v_B`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualState {
    pub pose: UnitDualQuaternion,
    pub twist: DualVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualDerivative {
    /// `q̂̇ = ½ q̂ ⊗ ξ̂`, as an 8-component tangent element.
    pub pose: DualQuaternion,
    pub twist: DualVector,
}

impl DualState {
    pub fn new(pose: UnitDualQuaternion, twist: DualVector) -> Self {
        Self { pose, twist }
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation()
    }

    pub fn attitude(&self) -> UnitQuaternion {
        self.pose.rotation()
    }

    pub fn angular_velocity(&self) -> Vec3 {
        self.twist.real
    }

    pub fn body_velocity(&self) -> Vec3 {
        self.twist.dual
    }

    pub fn world_velocity(&self) -> Vec3 {
        self.pose.rotation().rotate(&self.twist.dual)
    }

    pub fn to_classic(&self) -> ClassicState {
        ClassicState {
            position: self.position(),
            velocity: self.world_velocity(),
            attitude: self.attitude(),
            angular_velocity: self.twist.real,
        }
    }

    /// One RK4 step of the dual dynamics. `wrench` supplies the actuation
    /// wrench and a scalar integrand at each stage; the integrand is
    /// quadratured with the same weights and returned alongside the state.
    /// Stage poses are projected onto the unit constraints before `wrench`
    /// sees them; the final pose is renormalized.
    pub fn rk4_step_with(
        &self,
        dt: f64,
        body: &BodyParams,
        mut wrench: impl FnMut(&DualState) -> (DualVector, f64),
    ) -> (DualState, f64) {
        let base = self.pose.as_dual_quaternion();
        let mut eval = |s: &DualState| {
            let (fa, g) = wrench(s);
            (dual_derivative(s, &fa, body), g)
        };
        let shifted = |k: &DualDerivative, h: f64| DualState {
            pose: UnitDualQuaternion::normalize(&(base + k.pose * h)).unwrap_or(self.pose),
            twist: self.twist + k.twist * h,
        };
        let (k1, g1) = eval(self);
        let (k2, g2) = eval(&shifted(&k1, 0.5 * dt));
        let (k3, g3) = eval(&shifted(&k2, 0.5 * dt));
        let (k4, g4) = eval(&shifted(&k3, dt));
        let w = dt / 6.0;
        let pose = base + (k1.pose + k2.pose * 2.0 + k3.pose * 2.0 + k4.pose) * w;
        let twist = self.twist + (k1.twist + k2.twist * 2.0 + k3.twist * 2.0 + k4.twist) * w;
        let next = DualState { pose: UnitDualQuaternion::normalize(&pose).unwrap_or(self.pose), twist };
        (next, (g1 + 2.0 * g2 + 2.0 * g3 + g4) * w)
    }

    pub fn rk4_step(&self, dt: f64, body: &BodyParams, mut wrench: impl FnMut(&DualState) -> DualVector) -> DualState {
        self.rk4_step_with(dt, body, |s| (wrench(s), 0.0)).0
    }
}

/// Dual dynamics: `q̂̇ = ½ q̂ ⊗ ξ̂`, `ξ̂̇ = M⁻¹(F̂ − ξ̂ ×* M(ξ̂))` with
/// `F̂ = F̂_a + F̂_g`.
pub fn dual_derivative(s: &DualState, actuation: &DualVector, body: &BodyParams) -> DualDerivative {
    let inertia = body.dual_inertia();
    let momentum = inertia.apply(&s.twist);
    let total = *actuation + gravity_wrench(s, body);
    DualDerivative {
        pose: (s.pose.as_dual_quaternion() * DualQuaternion::pure(&s.twist)).scale(0.5),
        twist: inertia.apply_inverse(&(total - s.twist.cross_adjoint(&momentum))),
    }
}

/// `F̂_g = 0 + ε q* ⊙ (m g e_z)`.
pub fn gravity_wrench(s: &DualState, body: &BodyParams) -> DualVector {
    DualVector::new(Vec3::zeros(), s.pose.rotation().inverse_rotate(&(body.mass * body.gravity * e_z())))
}

/// `F̂_a = τ + ε f` with `f` the body-frame thrust vector.
pub fn actuation_wrench(torque: &Vec3, force: &Vec3) -> DualVector {
    DualVector::new(*torque, *force)
}

/// Componentwise box limits on the body-frame actuation wrench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchLimits {
    pub torque: Vec3,
    pub force: Vec3,
}

impl WrenchLimits {
    pub fn new(torque: Vec3, force: Vec3) -> Result<Self> {
        for v in torque.iter().chain(force.iter()) {
            if !(*v > 0.0) {
                return Err(Error::InvalidConfig(format!("wrench limits must be positive, got {v}")));
            }
        }
        Ok(Self { torque, force })
    }

    pub fn clamp(&self, w: &DualVector) -> DualVector {
        let clip = |x: &Vec3, l: &Vec3| Vec3::from_fn(|i, _| x[i].clamp(-l[i], l[i]));
        DualVector::new(clip(&w.real, &self.torque), clip(&w.dual, &self.force))
    }

    pub fn is_active(&self, w: &DualVector) -> bool {
        self.clamp(w) != *w
    }
}

/// Dual wrench of a scalar thrust `f` along `-e_z^B` plus torque `τ`.
pub fn thrust_wrench(thrust: f64, torque: &Vec3) -> DualVector {
    actuation_wrench(torque, &(-thrust * e_z()))
}
