//! Impulsive reset maps: the classical matrix formulation, the dual
//! quaternion formulation, a coupled-impulse variant that keeps the
//! normal/tangential cross term, and a randomized equivalence suite.
//!
//! The impulse-magnitude arithmetic lives in straight-line kernels generic
//! over [`Arith`], so the same code paths can be run with a counting scalar
//! (see [`crate::bench`]).

use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dualquat::DualVector;
use crate::dynamics::{BodyParams, ClassicState, DualInertia};
use crate::quat::UnitQuaternion;
use crate::{Error, Mat3, Result, Vec3};

/// Tangential contact speeds below this are treated as no slip (m/s).
pub const SLIP_THRESHOLD: f64 = 1e-8;
/// Normal closing speeds below this are treated as resting contact (m/s).
pub const RESTING_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    /// Contact point in the body frame (m).
    pub contact_point: Vec3,
    /// Unit surface normal in the world frame, pointing from the surface
    /// towards the body.
    pub normal: Vec3,
    pub restitution: f64,
    pub friction: f64,
}

impl ContactSpec {
    pub fn new(contact_point: Vec3, normal: Vec3, restitution: f64, friction: f64) -> Result<Self> {
        let deviation = (normal.norm() - 1.0).abs();
        if !(deviation <= 1e-9) {
            return Err(Error::NonUnitDirection { deviation });
        }
        if !contact_point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidContact("contact point is not finite".into()));
        }
        if !(0.0..1.0).contains(&restitution) {
            return Err(Error::InvalidContact(format!("restitution must lie in [0, 1), got {restitution}")));
        }
        if !(friction.is_finite() && friction >= 0.0) {
            return Err(Error::InvalidContact(format!("friction must be non-negative, got {friction}")));
        }
        Ok(Self { contact_point, normal, restitution, friction })
    }

    /// Same contact with `e = 1`; only used to exercise the elastic limit.
    #[doc(hidden)]
    pub fn elastic_unchecked(contact_point: Vec3, normal: Vec3) -> Self {
        Self { contact_point, normal, restitution: 1.0, friction: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseResult {
    /// Scalar impulse magnitude Λ (N·s).
    pub magnitude: f64,
    /// Impulsive wrench about the centre of mass, body frame.
    pub wrench: DualVector,
    /// Effective inverse mass along the normal (1/kg).
    pub inverse_mass: f64,
    /// Total impulse vector, body frame (N·s).
    pub impulse_body: Vec3,
    /// Total impulse vector, world frame (N·s).
    pub impulse_world: Vec3,
    /// Pre-impact normal closing velocity `⟨ξ̂⁻, ŝ_n⟩` (m/s, negative when approaching).
    pub normal_velocity: f64,
    /// Unit normal screw `ŝ_n`.
    pub normal_screw: DualVector,
    /// Unit slip direction in the body frame, if friction acted.
    pub slip_direction: Option<Vec3>,
    pub contact_point: Vec3,
    pub restitution: f64,
    pub friction: f64,
}

/// Unit direction of the tangential contact-point velocity in the body
/// frame, or `None` below [`SLIP_THRESHOLD`].
pub fn tangent_direction(twist: &DualVector, contact_point: &Vec3, normal_body: &Vec3) -> Option<Vec3> {
    let vc = twist.dual + twist.real.cross(contact_point);
    let tangential = vc - normal_body * vc.dot(normal_body);
    let speed = tangential.norm();
    (speed >= SLIP_THRESHOLD).then(|| tangential / speed)
}

fn screw(point: &Vec3, direction: &Vec3) -> DualVector {
    DualVector::new(point.cross(direction), *direction)
}

/// Decoupled closed-form impulse on the dual quaternion path.
pub fn impulse_dq(
    twist: &DualVector,
    contact: &ContactSpec,
    attitude: &UnitQuaternion,
    inertia: &DualInertia,
) -> Result<ImpulseResult> {
    let rot = attitude.to_rotation_matrix();
    let parts = dq_impulse_kernel(
        &rows(&rot),
        &rows(inertia.inertia_inv()),
        1.0 / inertia.mass(),
        &arr(&contact.contact_point),
        &arr(&contact.normal),
        &arr(&twist.real),
        &arr(&twist.dual),
        contact.restitution,
    );
    guard(parts.normal_velocity)?;
    let normal_body = rot.transpose() * contact.normal;
    Ok(assemble_dq(twist, contact, &rot, &normal_body, parts.magnitude, parts.inverse_mass, parts.normal_velocity))
}

/// Impulse that keeps the normal/tangential cross term of the effective
/// inertia. Enforces the restitution law exactly even with friction.
pub fn impulse_coupled_oracle(
    twist: &DualVector,
    contact: &ContactSpec,
    attitude: &UnitQuaternion,
    inertia: &DualInertia,
) -> Result<ImpulseResult> {
    let rot = attitude.to_rotation_matrix();
    let normal_body = rot.transpose() * contact.normal;
    let s_n = screw(&contact.contact_point, &normal_body);
    let normal_velocity = twist.dot(&s_n);
    guard(normal_velocity)?;
    let inverse_mass = inertia.apply_inverse(&s_n).dot(&s_n);
    let mut direction = s_n;
    if contact.friction > 0.0 {
        if let Some(t) = tangent_direction(twist, &contact.contact_point, &normal_body) {
            direction = direction + screw(&contact.contact_point, &-t) * contact.friction;
        }
    }
    let denominator = inertia.apply_inverse(&direction).dot(&s_n);
    if !(denominator > 0.0) {
        return Err(Error::CoupledDenominator { denominator });
    }
    let magnitude = -(1.0 + contact.restitution) * normal_velocity / denominator;
    Ok(assemble_dq(twist, contact, &rot, &normal_body, magnitude, inverse_mass, normal_velocity))
}

fn guard(normal_velocity: f64) -> Result<()> {
    if normal_velocity >= -RESTING_THRESHOLD || !normal_velocity.is_finite() {
        return Err(Error::SeparatingContact { normal_velocity });
    }
    Ok(())
}

fn assemble_dq(
    twist: &DualVector,
    contact: &ContactSpec,
    rot: &Mat3,
    normal_body: &Vec3,
    magnitude: f64,
    inverse_mass: f64,
    normal_velocity: f64,
) -> ImpulseResult {
    let r = contact.contact_point;
    let s_n = screw(&r, normal_body);
    let slip = if contact.friction > 0.0 { tangent_direction(twist, &r, normal_body) } else { None };
    let (wrench, impulse_body) = match slip {
        Some(t) => {
            let s_t = screw(&r, &-t);
            ((s_n + s_t * contact.friction) * magnitude, (normal_body - t * contact.friction) * magnitude)
        }
        None => (s_n * magnitude, normal_body * magnitude),
    };
    ImpulseResult {
        magnitude,
        wrench,
        inverse_mass,
        impulse_body,
        impulse_world: rot * impulse_body,
        normal_velocity,
        normal_screw: s_n,
        slip_direction: slip,
        contact_point: r,
        restitution: contact.restitution,
        friction: contact.friction,
    }
}

/// Classical impulse from the effective-mass expression in world
/// coordinates.
pub fn impulse_matrix(state: &ClassicState, contact: &ContactSpec, body: &BodyParams) -> Result<ImpulseResult> {
    impulse_matrix_with(state, contact, body.inertia_inv(), body.mass())
}

fn impulse_matrix_with(
    state: &ClassicState,
    contact: &ContactSpec,
    inertia_inv: &Mat3,
    mass: f64,
) -> Result<ImpulseResult> {
    let rot = state.attitude.to_rotation_matrix();
    let r = contact.contact_point;
    let n = contact.normal;
    let parts = matrix_impulse_kernel(
        &rows(&rot),
        &rows(inertia_inv),
        1.0 / mass,
        &arr(&r),
        &arr(&n),
        &arr(&state.velocity),
        &arr(&state.angular_velocity),
        contact.restitution,
    );
    guard(parts.normal_velocity)?;
    let vc = state.velocity + rot * state.angular_velocity.cross(&r);
    let tangential = vc - n * vc.dot(&n);
    let slip_world = if contact.friction > 0.0 && tangential.norm() >= SLIP_THRESHOLD {
        Some(tangential / tangential.norm())
    } else {
        None
    };
    let impulse_world = match slip_world {
        Some(t) => (n - t * contact.friction) * parts.magnitude,
        None => n * parts.magnitude,
    };
    let impulse_body = rot.transpose() * impulse_world;
    let normal_body = rot.transpose() * n;
    Ok(ImpulseResult {
        magnitude: parts.magnitude,
        wrench: DualVector::new(r.cross(&impulse_body), impulse_body),
        inverse_mass: parts.inverse_mass,
        impulse_body,
        impulse_world,
        normal_velocity: parts.normal_velocity,
        normal_screw: screw(&r, &normal_body),
        slip_direction: slip_world.map(|t| rot.transpose() * t),
        contact_point: r,
        restitution: contact.restitution,
        friction: contact.friction,
    })
}

/// `ξ̂⁺ = ξ̂⁻ + M⁻¹(Ŵ)`; the pose is left untouched by the caller.
pub fn reset_dq(twist: &DualVector, impulse: &ImpulseResult, inertia: &DualInertia) -> DualVector {
    let after = *twist + inertia.apply_inverse(&impulse.wrench);
    if let Some(t) = impulse.slip_direction {
        let r = impulse.contact_point;
        let slip_after = (after.dual + after.real.cross(&r)).dot(&t);
        if slip_after < 0.0 {
            log::debug!("friction impulse reversed the slip direction (post-impact slip {slip_after:.3e} m/s)");
        }
    }
    after
}

/// Classical reset `(v⁺, ω⁺)`.
pub fn reset_matrix(state: &ClassicState, impulse: &ImpulseResult, body: &BodyParams) -> (Vec3, Vec3) {
    reset_matrix_with(state, impulse, body.inertia_inv(), body.mass())
}

fn reset_matrix_with(state: &ClassicState, impulse: &ImpulseResult, inertia_inv: &Mat3, mass: f64) -> (Vec3, Vec3) {
    let lambda_body = state.attitude.inverse_rotate(&impulse.impulse_world);
    (
        state.velocity + impulse.impulse_world / mass,
        state.angular_velocity + inertia_inv * impulse.contact_point.cross(&lambda_body),
    )
}

/// Kinetic energy change across a jump, `⟨ξ̂⁻, Ŵ⟩ + ½⟨Ŵ, M⁻¹(Ŵ)⟩`.
pub fn kinetic_energy_change(twist: &DualVector, wrench: &DualVector, inertia: &DualInertia) -> f64 {
    twist.dot(wrench) + 0.5 * wrench.dot(&inertia.apply_inverse(wrench))
}

/// Frictionless closed form `−½Λ²⟨ŝ_n, M⁻¹ŝ_n⟩(1−e)/(1+e)`.
pub fn frictionless_energy_change(impulse: &ImpulseResult) -> f64 {
    let e = impulse.restitution;
    -0.5 * impulse.magnitude.powi(2) * impulse.inverse_mass * (1.0 - e) / (1.0 + e)
}

// ---------------------------------------------------------------------------
// Straight-line kernels

/// Arithmetic needed by the impulse kernels.
pub trait Arith:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn lift(value: f64) -> Self;
}

impl Arith for f64 {
    #[inline(always)]
    fn lift(value: f64) -> Self {
        value
    }
}

pub type V3<T> = [T; 3];
pub type M3<T> = [[T; 3]; 3];

#[inline(always)]
pub(crate) fn dot<T: Arith>(a: &V3<T>, b: &V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline(always)]
pub(crate) fn cross<T: Arith>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline(always)]
pub(crate) fn mat_vec<T: Arith>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

#[inline(always)]
pub(crate) fn mat_t_vec<T: Arith>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

#[inline(always)]
pub(crate) fn mat_mul<T: Arith>(a: &M3<T>, b: &M3<T>) -> M3<T> {
    let col = |j: usize| [b[0][j], b[1][j], b[2][j]];
    let (c0, c1, c2) = (col(0), col(1), col(2));
    [
        [dot(&a[0], &c0), dot(&a[0], &c1), dot(&a[0], &c2)],
        [dot(&a[1], &c0), dot(&a[1], &c1), dot(&a[1], &c2)],
        [dot(&a[2], &c0), dot(&a[2], &c1), dot(&a[2], &c2)],
    ]
}

#[inline(always)]
pub(crate) fn transpose<T: Arith>(m: &M3<T>) -> M3<T> {
    [[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]]
}

#[inline(always)]
pub(crate) fn scale<T: Arith>(s: T, v: &V3<T>) -> V3<T> {
    [s * v[0], s * v[1], s * v[2]]
}

#[inline(always)]
pub(crate) fn add<T: Arith>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn arr(v: &Vec3) -> V3<f64> {
    [v.x, v.y, v.z]
}

pub fn rows(m: &Mat3) -> M3<f64> {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeParts<T> {
    pub magnitude: T,
    pub inverse_mass: T,
    pub normal_velocity: T,
}

/// `ρ = m⁻¹ + nᵀR[J⁻¹(r × Rᵀn) × r]`.
#[inline(always)]
pub fn matrix_inverse_mass<T: Arith>(rot: &M3<T>, inertia_inv: &M3<T>, inv_mass: T, r: &V3<T>, n: &V3<T>) -> T {
    let n_body = mat_t_vec(rot, n);
    let moment = cross(r, &n_body);
    let ang = mat_vec(inertia_inv, &moment);
    let lever = cross(&ang, r);
    inv_mass + dot(n, &mat_vec(rot, &lever))
}

/// `ρ = ⟨M⁻¹(ŝ_n), ŝ_n⟩` with `ŝ_n = (r × n_B) + ε n_B`; also returns the
/// screw parts for reuse.
#[inline(always)]
fn dq_inverse_mass_parts<T: Arith>(
    rot: &M3<T>,
    inertia_inv: &M3<T>,
    inv_mass: T,
    r: &V3<T>,
    n: &V3<T>,
) -> (T, V3<T>, V3<T>) {
    let n_body = mat_t_vec(rot, n);
    let moment = cross(r, &n_body);
    let ang = mat_vec(inertia_inv, &moment);
    let lin = scale(inv_mass, &n_body);
    (dot(&ang, &moment) + dot(&lin, &n_body), moment, n_body)
}

#[inline(always)]
pub fn dq_inverse_mass<T: Arith>(rot: &M3<T>, inertia_inv: &M3<T>, inv_mass: T, r: &V3<T>, n: &V3<T>) -> T {
    dq_inverse_mass_parts(rot, inertia_inv, inv_mass, r, n).0
}

/// World-frame variant: the inertia is rotated into the world instead of
/// rotating the normal into the body.
#[inline(always)]
fn inertial_inverse_mass_parts<T: Arith>(
    rot: &M3<T>,
    inertia_inv: &M3<T>,
    inv_mass: T,
    r: &V3<T>,
    n: &V3<T>,
) -> (T, V3<T>) {
    let world_inv = mat_mul(&mat_mul(rot, inertia_inv), &transpose(rot));
    let r_world = mat_vec(rot, r);
    let moment = cross(&r_world, n);
    let lever = cross(&mat_vec(&world_inv, &moment), &r_world);
    (inv_mass + dot(n, &lever), r_world)
}

#[inline(always)]
pub fn inertial_inverse_mass<T: Arith>(rot: &M3<T>, inertia_inv: &M3<T>, inv_mass: T, r: &V3<T>, n: &V3<T>) -> T {
    inertial_inverse_mass_parts(rot, inertia_inv, inv_mass, r, n).0
}

#[inline(always)]
fn magnitude<T: Arith>(restitution: T, normal_velocity: T, inverse_mass: T) -> T {
    -((T::lift(1.0) + restitution) * normal_velocity) / inverse_mass
}

/// Impulse magnitude on the matrix path from world velocity and body rate.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn matrix_impulse_kernel<T: Arith>(
    rot: &M3<T>,
    inertia_inv: &M3<T>,
    inv_mass: T,
    r: &V3<T>,
    n: &V3<T>,
    velocity: &V3<T>,
    angular_velocity: &V3<T>,
    restitution: T,
) -> MagnitudeParts<T> {
    let inverse_mass = matrix_inverse_mass(rot, inertia_inv, inv_mass, r, n);
    let vc = add(velocity, &mat_vec(rot, &cross(angular_velocity, r)));
    let normal_velocity = dot(&vc, n);
    MagnitudeParts { magnitude: magnitude(restitution, normal_velocity, inverse_mass), inverse_mass, normal_velocity }
}

/// Impulse magnitude on the dual path from the body twist `ω + ε v_B`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn dq_impulse_kernel<T: Arith>(
    rot: &M3<T>,
    inertia_inv: &M3<T>,
    inv_mass: T,
    r: &V3<T>,
    n: &V3<T>,
    angular_velocity: &V3<T>,
    body_velocity: &V3<T>,
    restitution: T,
) -> MagnitudeParts<T> {
    let (inverse_mass, moment, n_body) = dq_inverse_mass_parts(rot, inertia_inv, inv_mass, r, n);
    let normal_velocity = dot(angular_velocity, &moment) + dot(body_velocity, &n_body);
    MagnitudeParts { magnitude: magnitude(restitution, normal_velocity, inverse_mass), inverse_mass, normal_velocity }
}

/// Impulse magnitude with everything expressed in the world frame.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn inertial_impulse_kernel<T: Arith>(
    rot: &M3<T>,
    inertia_inv: &M3<T>,
    inv_mass: T,
    r: &V3<T>,
    n: &V3<T>,
    velocity: &V3<T>,
    angular_velocity: &V3<T>,
    restitution: T,
) -> MagnitudeParts<T> {
    let (inverse_mass, r_world) = inertial_inverse_mass_parts(rot, inertia_inv, inv_mass, r, n);
    let vc = add(velocity, &cross(&mat_vec(rot, angular_velocity), &r_world));
    let normal_velocity = dot(&vc, n);
    MagnitudeParts { magnitude: magnitude(restitution, normal_velocity, inverse_mass), inverse_mass, normal_velocity }
}

// ---------------------------------------------------------------------------
// Randomized equivalence suite

/// One random impact configuration.
#[derive(Debug, Clone, Copy)]
pub struct ImpactSample {
    pub body: BodyParams,
    pub state: ClassicState,
    pub contact: ContactSpec,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    let axis = unit_vector(rng);
    UnitQuaternion::exp(&(axis * rng.random_range(0.0..std::f64::consts::PI)))
}

/// Random rigid body with a random principal frame and an approaching
/// contact. `friction_max` bounds μ (0 gives frictionless contacts).
pub fn random_impact(rng: &mut ChaCha8Rng, friction_max: f64) -> ImpactSample {
    let principal = Vec3::new(rng.random_range(0.005..0.2), rng.random_range(0.005..0.2), rng.random_range(0.005..0.2));
    let frame = random_rotation(rng).to_rotation_matrix();
    let inertia = frame * Mat3::from_diagonal(&principal) * frame.transpose();
    let inertia = (inertia + inertia.transpose()) * 0.5;
    let body = BodyParams::new(rng.random_range(0.2..5.0), inertia, 9.81).expect("random body is valid");
    let attitude = random_rotation(rng);
    let angular_velocity = unit_vector(rng) * rng.random_range(0.0..10.0);
    let mut velocity = unit_vector(rng) * rng.random_range(0.0..5.0);
    let contact_point = unit_vector(rng) * rng.random_range(0.01..0.3);
    let normal = unit_vector(rng);
    let vc = velocity + attitude.rotate(&angular_velocity.cross(&contact_point));
    let closing = rng.random_range(0.05..4.0);
    // shift the velocity so the contact closes at `closing` m/s
    velocity -= normal * (vc.dot(&normal) + closing);
    let restitution = rng.random_range(0.0..1.0);
    let friction = if friction_max > 0.0 { rng.random_range(0.0..=friction_max) } else { 0.0 };
    ImpactSample {
        body,
        state: ClassicState { position: Vec3::zeros(), velocity, attitude, angular_velocity },
        contact: ContactSpec::new(contact_point, normal, restitution, friction).expect("random contact is valid"),
    }
}

/// Maximum relative deviations between the matrix and dual reset maps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub inverse_mass: f64,
    pub magnitude: f64,
    pub delta_v: f64,
    pub delta_omega: f64,
}

impl EquivalenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.inverse_mass.max(self.magnitude).max(self.delta_v).max(self.delta_omega)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_deviation() <= tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn rel_vec(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Runs `samples` seeded random impacts (e ∈ [0,1), μ ∈ [0,1]) through both
/// reset maps. With `fault` set, the matrix path sees the inertia scaled by
/// `1 + 1e-6`, which the report must expose.
pub fn equivalence_suite(samples: usize, seed: u64, fault: bool) -> Result<EquivalenceReport> {
    if samples == 0 {
        return Err(Error::ZeroCount { what: "samples" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport { samples, ..Default::default() };
    for _ in 0..samples {
        let s = random_impact(&mut rng, 1.0);
        let inertia = s.body.dual_inertia();
        let twist = s.state.to_dual().twist;
        let dq = impulse_dq(&twist, &s.contact, &s.state.attitude, &inertia)?;
        let matrix_body = if fault { s.body.with_scaled_inertia(1.0 + 1e-6)? } else { s.body };
        let mx = impulse_matrix_with(&s.state, &s.contact, matrix_body.inertia_inv(), matrix_body.mass())?;
        let after = reset_dq(&twist, &dq, &inertia);
        let dv_dq = s.state.attitude.rotate(&after.dual) - s.state.velocity;
        let dw_dq = after.real - s.state.angular_velocity;
        let (v_mx, w_mx) = reset_matrix_with(&s.state, &mx, matrix_body.inertia_inv(), matrix_body.mass());
        // the world velocity after the dq jump is rebuilt from v_B⁺, so compare increments
        let dv_mx = v_mx - s.state.velocity;
        let dw_mx = w_mx - s.state.angular_velocity;
        report.inverse_mass = report.inverse_mass.max(rel(dq.inverse_mass, mx.inverse_mass));
        report.magnitude = report.magnitude.max(rel(dq.magnitude, mx.magnitude));
        report.delta_v = report.delta_v.max(rel_vec(&dv_dq, &dv_mx));
        report.delta_omega = report.delta_omega.max(rel_vec(&dw_dq, &dw_mx));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualquat::UnitDualQuaternion;
    use crate::dynamics::DualState;

    fn unit_body() -> BodyParams {
        BodyParams::new(1.0, Mat3::from_diagonal(&Vec3::new(0.01, 0.012, 0.02)), 9.81).unwrap()
    }

    fn head_on(e: f64) -> (DualVector, ContactSpec) {
        let contact = ContactSpec::new(Vec3::new(0.0, 0.0, -0.1), Vec3::z(), e, 0.0).unwrap();
        (DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -2.0)), contact)
    }

    #[test]
    fn contact_validation() {
        assert!(ContactSpec::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.1), 0.5, 0.1).is_err());
        assert!(ContactSpec::new(Vec3::zeros(), Vec3::z(), 1.0, 0.1).is_err());
        assert!(ContactSpec::new(Vec3::zeros(), Vec3::z(), -0.1, 0.1).is_err());
        assert!(ContactSpec::new(Vec3::zeros(), Vec3::z(), 0.5, -0.1).is_err());
    }

    #[test]
    fn tangent_examples() {
        let pure_normal = DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -2.0));
        assert_eq!(tangent_direction(&pure_normal, &Vec3::zeros(), &Vec3::z()), None);
        let sliding = DualVector::new(Vec3::zeros(), Vec3::new(1.0, 0.0, -2.0));
        assert_eq!(tangent_direction(&sliding, &Vec3::zeros(), &Vec3::z()), Some(Vec3::x()));
    }

    #[test]
    fn tangent_is_unit_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let twist = DualVector::new(unit_vector(&mut rng) * 3.0, unit_vector(&mut rng) * 2.0);
            let n = unit_vector(&mut rng);
            let r = unit_vector(&mut rng) * 0.2;
            let t = tangent_direction(&twist, &r, &n).unwrap();
            assert!(t.dot(&n).abs() < 1e-12);
            assert!((t.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn head_on_magnitudes() {
        let body = BodyParams::new(1.0, Mat3::identity() * 0.01, 9.81).unwrap();
        for (e, expected) in [(0.7, 3.4), (0.0, 2.0)] {
            let (twist, contact) = head_on(e);
            let hit = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
            assert!((hit.inverse_mass - 1.0).abs() < 1e-15);
            assert!((hit.normal_velocity + 2.0).abs() < 1e-15);
            assert!((hit.magnitude - expected).abs() < 1e-12);
            let state = DualState::new(UnitDualQuaternion::identity(), twist).to_classic();
            let mx = impulse_matrix(&state, &contact, &body).unwrap();
            assert!((mx.inverse_mass - 1.0).abs() < 1e-15);
            assert!((mx.impulse_world - Vec3::new(0.0, 0.0, expected)).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_only_contact_is_classified() {
        let body = unit_body();
        let contact = ContactSpec::new(Vec3::y(), Vec3::z(), 0.5, 0.0).unwrap();
        // ω × r = e_x × e_y = e_z: the point moves along +n, away from the surface
        let state = ClassicState {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vec3::x(),
        };
        assert!(matches!(impulse_matrix(&state, &contact, &body), Err(Error::SeparatingContact { .. })));
        let state = ClassicState { angular_velocity: -Vec3::x(), ..state };
        let hit = impulse_matrix(&state, &contact, &body).unwrap();
        assert!((hit.normal_velocity + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_closing_speed_is_rejected() {
        let body = unit_body();
        let contact = ContactSpec::new(Vec3::zeros(), Vec3::z(), 0.5, 0.0).unwrap();
        let state = ClassicState {
            position: Vec3::zeros(),
            velocity: Vec3::new(1.0, 0.0, 0.0),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vec3::zeros(),
        };
        assert!(impulse_matrix(&state, &contact, &body).is_err());
        let twist = state.to_dual().twist;
        assert!(impulse_dq(&twist, &contact, &state.attitude, &body.dual_inertia()).is_err());
    }

    #[test]
    fn zero_impulse_leaves_twist() {
        let body = unit_body();
        let (twist, contact) = head_on(0.5);
        let mut hit = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
        hit.magnitude = 0.0;
        hit.wrench = DualVector::zeros();
        hit.impulse_world = Vec3::zeros();
        assert_eq!(reset_dq(&twist, &hit, &body.dual_inertia()), twist);
        let state = DualState::new(UnitDualQuaternion::identity(), twist).to_classic();
        assert_eq!(reset_matrix(&state, &hit, &body), (state.velocity, state.angular_velocity));
    }

    #[test]
    fn elastic_head_on_reflects() {
        let body = unit_body();
        let contact = ContactSpec::elastic_unchecked(Vec3::new(0.0, 0.0, -0.1), Vec3::z());
        let twist = DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -2.0));
        let hit = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
        let after = reset_dq(&twist, &hit, &body.dual_inertia());
        assert!((after.dot(&hit.normal_screw) - 2.0).abs() < 1e-12);
        let state = DualState::new(UnitDualQuaternion::identity(), twist).to_classic();
        let (v, _) = reset_matrix(&state, &impulse_matrix(&state, &contact, &body).unwrap(), &body);
        assert!((v - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn restitution_law_and_matrix_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let s = random_impact(&mut rng, 0.0);
            let m = s.body.dual_inertia();
            let twist = s.state.to_dual().twist;
            let hit = impulse_dq(&twist, &s.contact, &s.state.attitude, &m).unwrap();
            let after = reset_dq(&twist, &hit, &m);
            let scale = hit.normal_velocity.abs();
            assert!((after.dot(&hit.normal_screw) + s.contact.restitution * hit.normal_velocity).abs() < 1e-10 * scale.max(1.0));
            let (v, w) = reset_matrix(&s.state, &impulse_matrix(&s.state, &s.contact, &s.body).unwrap(), &s.body);
            let v_dq = s.state.attitude.rotate(&after.dual);
            assert!((v - v_dq).norm() < 1e-10 * v.norm().max(1.0));
            assert!((w - after.real).norm() < 1e-10 * w.norm().max(1.0));
        }
    }

    #[test]
    fn equivalence_suite_passes_and_detects_fault() {
        let clean = equivalence_suite(2000, 5, false).unwrap();
        assert!(clean.inverse_mass < 1e-12, "{clean:?}");
        assert!(clean.passes(1e-10), "{clean:?}");
        let faulty = equivalence_suite(2000, 5, true).unwrap();
        assert!(!faulty.passes(1e-9), "{faulty:?}");
        assert!(matches!(equivalence_suite(0, 5, false), Err(Error::ZeroCount { .. })));
    }

    #[test]
    fn frictionless_energy_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let s = random_impact(&mut rng, 0.0);
            let m = s.body.dual_inertia();
            let twist = s.state.to_dual().twist;
            let hit = impulse_dq(&twist, &s.contact, &s.state.attitude, &m).unwrap();
            let direct = m.kinetic_energy(&reset_dq(&twist, &hit, &m)) - m.kinetic_energy(&twist);
            let closed = frictionless_energy_change(&hit);
            let via_wrench = kinetic_energy_change(&twist, &hit.wrench, &m);
            let scale = m.kinetic_energy(&twist).max(1.0);
            assert!((direct - closed).abs() < 1e-10 * scale, "{direct} {closed}");
            assert!((via_wrench - closed).abs() < 1e-10 * scale);
            assert!(closed <= 0.0);
        }
    }

    #[test]
    fn frame_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let s = random_impact(&mut rng, 1.0);
            let world = random_rotation(&mut rng);
            let base = impulse_matrix(&s.state, &s.contact, &s.body).unwrap();
            let rotated_state = ClassicState {
                position: world.rotate(&s.state.position),
                velocity: world.rotate(&s.state.velocity),
                attitude: world * s.state.attitude,
                angular_velocity: s.state.angular_velocity,
            };
            let rotated_contact = ContactSpec { normal: world.rotate(&s.contact.normal), ..s.contact };
            let moved = impulse_matrix(&rotated_state, &rotated_contact, &s.body).unwrap();
            assert!(rel(moved.magnitude, base.magnitude) < 1e-12);
            let twist = rotated_state.to_dual().twist;
            let dq = impulse_dq(&twist, &rotated_contact, &rotated_state.attitude, &s.body.dual_inertia()).unwrap();
            assert!(rel(dq.magnitude, base.magnitude) < 1e-12);
        }
    }

    #[test]
    fn coupled_oracle_reduces_to_decoupled() {
        let body = unit_body();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let s = random_impact(&mut rng, 0.0);
            let twist = s.state.to_dual().twist;
            let m = s.body.dual_inertia();
            let a = impulse_dq(&twist, &s.contact, &s.state.attitude, &m).unwrap();
            let b = impulse_coupled_oracle(&twist, &s.contact, &s.state.attitude, &m).unwrap();
            assert!(rel(b.magnitude, a.magnitude) < 1e-14);
        }
        // spherical inertia and a contact point on the normal line
        let sphere = BodyParams::new(1.3, Mat3::identity() * 0.02, 9.81).unwrap().dual_inertia();
        let contact = ContactSpec::new(Vec3::new(0.0, 0.0, -0.1), Vec3::z(), 0.6, 0.4).unwrap();
        let twist = DualVector::new(Vec3::new(0.5, -1.0, 0.2), Vec3::new(1.0, 0.3, -2.0));
        let a = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &sphere).unwrap();
        let b = impulse_coupled_oracle(&twist, &contact, &UnitQuaternion::identity(), &sphere).unwrap();
        assert!(rel(b.magnitude, a.magnitude) < 1e-14);
        let _ = body;
    }

    #[test]
    fn coupled_oracle_deviation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 1000 {
            let mut s = random_impact(&mut rng, 0.0);
            s.contact.friction = 0.3;
            let twist = s.state.to_dual().twist;
            let m = s.body.dual_inertia();
            let (Ok(a), Ok(b)) = (
                impulse_dq(&twist, &s.contact, &s.state.attitude, &m),
                impulse_coupled_oracle(&twist, &s.contact, &s.state.attitude, &m),
            ) else {
                continue;
            };
            let t = a.slip_direction.unwrap();
            let s_t = screw(&s.contact.contact_point, &-t);
            let ratio = 0.3 * m.apply_inverse(&s_t).dot(&a.normal_screw) / m.apply_inverse(&a.normal_screw).dot(&a.normal_screw);
            // Λ_dq / Λ_coupled − 1 equals the cross-term ratio
            assert!((a.magnitude / b.magnitude - 1.0 - ratio).abs() < 1e-12);
            // and the coupled impulse satisfies the restitution law exactly
            let after = reset_dq(&twist, &b, &m);
            assert!((after.dot(&b.normal_screw) + s.contact.restitution * b.normal_velocity).abs() < 1e-10);
            checked += 1;
        }
    }

    #[test]
    fn friction_opposes_slip() {
        let body = unit_body();
        let contact = ContactSpec::new(Vec3::new(0.0, 0.0, -0.05), Vec3::z(), 0.7, 0.3).unwrap();
        let twist = DualVector::new(Vec3::zeros(), Vec3::new(1.5, 0.0, -2.0));
        let hit = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
        assert_eq!(hit.slip_direction, Some(Vec3::x()));
        assert!(hit.impulse_body.x < 0.0);
        let m = body.dual_inertia();
        assert!(m.kinetic_energy(&reset_dq(&twist, &hit, &m)) < m.kinetic_energy(&twist));
    }

    #[test]
    fn kernels_agree_in_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..1000 {
            let s = random_impact(&mut rng, 0.0);
            let rot = rows(&s.state.attitude.to_rotation_matrix());
            let jinv = rows(s.body.inertia_inv());
            let (r, n) = (arr(&s.contact.contact_point), arr(&s.contact.normal));
            let minv = 1.0 / s.body.mass();
            let a = matrix_inverse_mass(&rot, &jinv, minv, &r, &n);
            let b = dq_inverse_mass(&rot, &jinv, minv, &r, &n);
            let c = inertial_inverse_mass(&rot, &jinv, minv, &r, &n);
            assert!(rel(b, a) < 1e-12 && rel(c, a) < 1e-12);
            let twist = s.state.to_dual().twist;
            let v = arr(&s.state.velocity);
            let w = arr(&s.state.angular_velocity);
            let e = s.contact.restitution;
            let mx = matrix_impulse_kernel(&rot, &jinv, minv, &r, &n, &v, &w, e);
            let dq = dq_impulse_kernel(&rot, &jinv, minv, &r, &n, &w, &arr(&twist.dual), e);
            let inr = inertial_impulse_kernel(&rot, &jinv, minv, &r, &n, &v, &w, e);
            assert!(rel(dq.magnitude, mx.magnitude) < 1e-10 && rel(inr.magnitude, mx.magnitude) < 1e-10);
        }
    }
}
