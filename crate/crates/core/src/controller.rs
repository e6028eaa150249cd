//! Impact recovery control: the admittance setpoint shift, the dual
//! feedback-linearizing control law, the Lyapunov function with its flow
//! and jump certificates, and a cascaded PD baseline.

use crate::dualquat::{DualMatrix, DualVector, UnitDualQuaternion};
use crate::dynamics::{e_z, gravity_wrench, BodyParams, ClassicState, DualInertia, DualState};
use crate::impact::{kinetic_energy_change, ImpulseResult};
use crate::quat::{Quaternion, UnitQuaternion};
use crate::{Error, Mat3, Result, Vec3};

/// Fraction of the gain bound used when clamping the admittance at runtime.
pub const BOUND_MARGIN: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Attitude potential gain `k_q`.
    pub attitude_stiffness: f64,
    /// Position potential gain `k_p`.
    pub position_stiffness: f64,
    /// Dual damping `K_d` (real block acts on ω, dual block on v_B).
    pub damping: DualMatrix,
    /// Admittance `Γ = Γ_ω + ε Γ_v`, diagonal.
    pub admittance: DualMatrix,
    /// Energy split α between the attitude and position shift.
    pub energy_split: f64,
    /// Value returned by [`gain_bounds`] when a twist component vanishes.
    pub admittance_cap: f64,
}

fn is_spd(m: &Mat3) -> bool {
    (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max()
        && nalgebra::SymmetricEigen::new(*m).eigenvalues.min() > 0.0
}

impl ControllerGains {
    pub fn new(
        attitude_stiffness: f64,
        position_stiffness: f64,
        damping: DualMatrix,
        admittance: DualMatrix,
        energy_split: f64,
        admittance_cap: f64,
    ) -> Result<Self> {
        if !(attitude_stiffness.is_finite() && attitude_stiffness > 0.0) {
            return Err(Error::InvalidGains(format!("attitude stiffness must be positive, got {attitude_stiffness}")));
        }
        if !(position_stiffness.is_finite() && position_stiffness > 0.0) {
            return Err(Error::InvalidGains(format!("position stiffness must be positive, got {position_stiffness}")));
        }
        if !(damping.is_finite() && is_spd(&damping.real) && is_spd(&damping.dual)) {
            return Err(Error::InvalidGains("damping blocks must be symmetric positive definite".into()));
        }
        if !admittance.is_positive_diagonal() {
            return Err(Error::InvalidGains("admittance blocks must be positive diagonal".into()));
        }
        if !(energy_split > 0.0 && energy_split < 1.0) {
            return Err(Error::InvalidGains(format!("energy split must lie in (0, 1), got {energy_split}")));
        }
        if !(admittance_cap.is_finite() && admittance_cap > 0.0) {
            return Err(Error::InvalidGains(format!("admittance cap must be positive, got {admittance_cap}")));
        }
        Ok(Self { attitude_stiffness, position_stiffness, damping, admittance, energy_split, admittance_cap })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySetpoint {
    /// Braking displacement `δ̂ = Γ ∘ ξ̂⁺`.
    pub displacement: DualVector,
    /// `exp(½δ̂)`.
    pub shift: UnitDualQuaternion,
    /// Latched target pose.
    pub target: UnitDualQuaternion,
    pub impact_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// `q̂_e = q̂_d* ⊗ q̂`, canonicalized to a non-negative scalar part.
    pub error: UnitDualQuaternion,
    /// Vector part of the rotational error.
    pub attitude: Vec3,
    /// Translational error in the target frame, `R_dᵀ(p − p_d)`.
    pub position: Vec3,
    /// Translational error in the body frame, `Rᵀ(p − p_d)`.
    pub position_body: Vec3,
}

impl PoseError {
    pub fn scalar(&self) -> f64 {
        self.error.real().w()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LyapunovSample {
    pub total: f64,
    pub potential: f64,
    pub kinetic: f64,
    /// Flow rate `−⟨ξ̂, K_d ∘ ξ̂⟩` predicted by the control law (W).
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCertificate {
    /// Kinetic energy change evaluated from the twists.
    pub kinetic_change: f64,
    /// `⟨ξ̂⁻, Ŵ⟩ + ½⟨Ŵ, M⁻¹Ŵ⟩`.
    pub kinetic_change_wrench: f64,
    /// Frictionless closed form; exact only when no friction acted.
    pub kinetic_change_closed: f64,
    /// `E_diss = −ΔV_kin`.
    pub dissipated: f64,
    /// Potential before the jump, `V_pos⁻`.
    pub potential_before: f64,
    /// Small-angle injected potential `¼k_q‖Γ_ω ω⁺‖² + ½k_p‖Γ_v v_B⁺‖²`.
    pub injected: f64,
    pub ok: bool,
}

impl JumpCertificate {
    pub fn budget(&self) -> f64 {
        self.dissipated + self.potential_before
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBounds {
    pub attitude: f64,
    pub position: f64,
}

pub fn braking_displacement(twist_after: &DualVector, admittance: &DualMatrix) -> DualVector {
    admittance.apply(twist_after)
}

/// Latches `q̂_d = q̂(t_c) ⊗ exp(½ Γ∘ξ̂⁺)`.
pub fn make_setpoint(
    twist_after: &DualVector,
    pose_at_impact: &UnitDualQuaternion,
    admittance: &DualMatrix,
    impact_time: f64,
) -> Result<RecoverySetpoint> {
    let displacement = braking_displacement(twist_after, admittance);
    let shift = UnitDualQuaternion::exp(&displacement)?;
    Ok(RecoverySetpoint { displacement, shift, target: pose_at_impact.compose(&shift), impact_time })
}

pub fn pose_error(target: &UnitDualQuaternion, pose: &UnitDualQuaternion) -> PoseError {
    let raw = target.conjugate().compose(pose);
    let (rotation, position) = raw.to_pose();
    let rotation = rotation.canonical();
    PoseError {
        error: UnitDualQuaternion::from_pose(&rotation, &position),
        attitude: rotation.vector(),
        position,
        position_body: rotation.inverse_rotate(&position),
    }
}

/// Actuation wrench
/// `F̂_a = −F̂_g + ξ̂ ×* M(ξ̂) − (k_q q_e^v + ε k_p p_e^B) − K_d ∘ ξ̂`.
pub fn control_wrench(s: &DualState, error: &PoseError, gains: &ControllerGains, body: &BodyParams) -> DualVector {
    let inertia = body.dual_inertia();
    let momentum = inertia.apply(&s.twist);
    let stiffness =
        DualVector::new(error.attitude * gains.attitude_stiffness, error.position_body * gains.position_stiffness);
    -gravity_wrench(s, body) + s.twist.cross_adjoint(&momentum) - stiffness - gains.damping.apply(&s.twist)
}

/// Gravity-compensating wrench used before the first impact.
pub fn coast_wrench(s: &DualState, body: &BodyParams) -> DualVector {
    -gravity_wrench(s, body)
}

pub fn potential(error: &PoseError, gains: &ControllerGains) -> f64 {
    2.0 * gains.attitude_stiffness * (1.0 - error.scalar())
        + 0.5 * gains.position_stiffness * error.position.norm_squared()
}

pub fn dissipation_rate(twist: &DualVector, damping: &DualMatrix) -> f64 {
    twist.dot(&damping.apply(twist))
}

/// `V = 2k_q(1 − q_e^w) + ½k_p‖p_e‖² + ½⟨ξ̂, M(ξ̂)⟩`.
pub fn lyapunov(s: &DualState, error: &PoseError, gains: &ControllerGains, inertia: &DualInertia) -> LyapunovSample {
    let potential = potential(error, gains);
    let kinetic = inertia.kinetic_energy(&s.twist);
    LyapunovSample {
        total: potential + kinetic,
        potential,
        kinetic,
        rate: -dissipation_rate(&s.twist, &gains.damping),
    }
}

/// Energy bookkeeping for one impact. `admittance` is the shift gain
/// actually used to latch the new setpoint.
pub fn jump_certificate(
    before: &DualVector,
    after: &DualVector,
    impulse: &ImpulseResult,
    inertia: &DualInertia,
    gains: &ControllerGains,
    potential_before: f64,
    admittance: &DualMatrix,
) -> JumpCertificate {
    let kinetic_change = inertia.kinetic_energy(after) - inertia.kinetic_energy(before);
    let dissipated = -kinetic_change;
    let injected = injected_potential(after, admittance, gains);
    JumpCertificate {
        kinetic_change,
        kinetic_change_wrench: kinetic_energy_change(before, &impulse.wrench, inertia),
        kinetic_change_closed: crate::impact::frictionless_energy_change(impulse),
        dissipated,
        potential_before,
        injected,
        ok: injected < dissipated + potential_before,
    }
}

pub fn injected_potential(twist_after: &DualVector, admittance: &DualMatrix, gains: &ControllerGains) -> f64 {
    let d = braking_displacement(twist_after, admittance);
    0.25 * gains.attitude_stiffness * d.real.norm_squared() + 0.5 * gains.position_stiffness * d.dual.norm_squared()
}

/// Largest scalar admittances keeping the injected potential below `budget`.
pub fn gain_bounds(angular_velocity: &Vec3, body_velocity: &Vec3, budget: f64, gains: &ControllerGains) -> GainBounds {
    let budget = budget.max(0.0);
    let bound = |num: f64, den: f64| if den > 0.0 { (num / den).sqrt() } else { gains.admittance_cap };
    GainBounds {
        attitude: bound(
            4.0 * gains.energy_split * budget,
            gains.attitude_stiffness * angular_velocity.norm_squared(),
        ),
        position: bound(
            2.0 * (1.0 - gains.energy_split) * budget,
            gains.position_stiffness * body_velocity.norm_squared(),
        ),
    }
}

/// Configured admittance with each diagonal entry clamped to
/// `margin ×` the corresponding bound.
pub fn clamp_admittance(admittance: &DualMatrix, bounds: &GainBounds, margin: f64) -> DualMatrix {
    let a = margin * bounds.attitude;
    let p = margin * bounds.position;
    let real = admittance.real.diagonal().map(|g| g.min(a));
    let dual = admittance.dual.diagonal().map(|g| g.min(p));
    DualMatrix::from_diagonals(&real, &dual)
}

// ---------------------------------------------------------------------------
// Baseline

/// Gains of the cascaded PD baseline, matched to the dual controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineGains {
    pub attitude_stiffness: f64,
    pub attitude_damping: Vec3,
    pub position_stiffness: f64,
    pub position_damping: Vec3,
}

impl BaselineGains {
    /// Stiffness from `k_q`, `k_p`; damping from the diagonals of `K_d`.
    pub fn matched(gains: &ControllerGains) -> Self {
        Self {
            attitude_stiffness: gains.attitude_stiffness,
            attitude_damping: gains.damping.real.diagonal(),
            position_stiffness: gains.position_stiffness,
            position_damping: gains.damping.dual.diagonal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSetpoint {
    pub position: Vec3,
    /// Only the heading of this attitude is tracked.
    pub attitude: UnitQuaternion,
}

impl BaselineSetpoint {
    pub fn from_pose(pose: &UnitDualQuaternion) -> Self {
        Self { position: pose.translation(), attitude: pose.rotation() }
    }

    /// Decoupled admittance: `p_d = p(t_c) + Γ_v v⁺` in the world frame and
    /// `q_d = q(t_c) ⊗ exp(Γ_ω ω⁺)`.
    pub fn latch(state: &ClassicState, admittance: &DualMatrix) -> Self {
        Self {
            position: state.position + admittance.dual * state.velocity,
            attitude: state.attitude * UnitQuaternion::exp(&(admittance.real * state.angular_velocity)),
        }
    }

    pub fn pose(&self) -> UnitDualQuaternion {
        UnitDualQuaternion::from_pose(&self.attitude, &self.position)
    }
}

fn rotation_from_columns(x: &Vec3, y: &Vec3, z: &Vec3) -> UnitQuaternion {
    let m = Mat3::from_columns(&[*x, *y, *z]);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
    UnitQuaternion::new_normalize(Quaternion::new(q.w, q.i, q.j, q.k)).unwrap_or_default()
}

/// Desired attitude whose body `z` axis is `z_axis` and whose heading is
/// taken from `heading`.
pub fn attitude_from_thrust_axis(z_axis: &Vec3, heading: &UnitQuaternion) -> UnitQuaternion {
    let x_ref = heading.rotate(&Vec3::x());
    let mut y = z_axis.cross(&x_ref);
    if y.norm() < 1e-9 {
        y = z_axis.cross(&heading.rotate(&Vec3::y())).cross(z_axis);
    }
    let y = y.normalize();
    let x = y.cross(z_axis);
    rotation_from_columns(&x, &y, z_axis)
}

/// Cascaded PD baseline returning scalar thrust and body torque.
pub fn baseline_controller(
    s: &ClassicState,
    setpoint: &BaselineSetpoint,
    gains: &BaselineGains,
    body: &BodyParams,
) -> (f64, Vec3) {
    let force = -gains.position_stiffness * (s.position - setpoint.position)
        - gains.position_damping.component_mul(&s.velocity);
    // f R e_z must equal m g e_z − F_des
    let demand = body.mass() * body.gravity() * e_z() - force;
    let axis = s.attitude.rotate(&e_z());
    let thrust = demand.dot(&axis).max(0.0);
    let z_desired = if demand.norm() > 1e-9 { demand.normalize() } else { e_z() };
    let desired = attitude_from_thrust_axis(&z_desired, &setpoint.attitude);
    let err = (desired.conjugate() * s.attitude).canonical();
    let omega = s.angular_velocity;
    let torque = -gains.attitude_stiffness * err.vector() - gains.attitude_damping.component_mul(&omega)
        + omega.cross(&(body.inertia() * omega));
    (thrust, torque)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::thrust_wrench;
    use crate::impact::{impulse_dq, random_impact};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gains() -> ControllerGains {
        ControllerGains::new(
            1.0,
            6.0,
            DualMatrix::from_diagonals(&Vec3::repeat(0.14), &Vec3::repeat(5.0)),
            DualMatrix::from_diagonals(&Vec3::repeat(0.2), &Vec3::repeat(0.3)),
            0.5,
            10.0,
        )
        .unwrap()
    }

    fn body() -> BodyParams {
        BodyParams::new(1.0, Mat3::from_diagonal(&Vec3::new(0.01, 0.01, 0.02)), 9.81).unwrap()
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vec3> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_pose() -> impl Strategy<Value = UnitDualQuaternion> {
        (arb_vec(3.0), arb_vec(5.0)).prop_map(|(w, p)| UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&w), &p))
    }

    #[test]
    fn gain_validation() {
        let g = gains();
        assert!(ControllerGains::new(0.0, 1.0, g.damping, g.admittance, 0.5, 1.0).is_err());
        assert!(ControllerGains::new(1.0, 1.0, g.damping, g.admittance, 1.0, 1.0).is_err());
        let bad = DualMatrix::from_diagonals(&Vec3::new(0.1, 0.0, 0.1), &Vec3::repeat(0.1));
        assert!(ControllerGains::new(1.0, 1.0, g.damping, bad, 0.5, 1.0).is_err());
        assert!(ControllerGains::new(1.0, 1.0, bad, g.admittance, 0.5, 1.0).is_err());
    }

    #[test]
    fn braking_examples() {
        let gamma = DualMatrix::from_diagonals(&Vec3::repeat(0.2), &Vec3::repeat(0.3));
        assert_eq!(braking_displacement(&DualVector::zeros(), &gamma), DualVector::zeros());
        let d = braking_displacement(&DualVector::new(Vec3::x(), Vec3::z()), &gamma);
        assert!((d.real - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        assert!((d.dual - Vec3::new(0.0, 0.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn setpoint_examples() {
        let g = gains();
        let pose = UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&Vec3::new(0.0, 0.0, 0.5)), &Vec3::new(1.0, 2.0, 3.0));
        let sp = make_setpoint(&DualVector::zeros(), &pose, &g.admittance, 0.0).unwrap();
        assert!((sp.target.translation() - pose.translation()).norm() < 1e-14);
        // translation-only twist: shift by Γ_v v_B⁺ along the impact body axes
        let v = Vec3::new(1.0, -2.0, 0.5);
        let sp = make_setpoint(&DualVector::new(Vec3::zeros(), v), &pose, &g.admittance, 1.5).unwrap();
        let expected = pose.translation() + pose.rotation().rotate(&(0.3 * v));
        assert!((sp.target.translation() - expected).norm() < 1e-12);
        assert_eq!(sp.shift, UnitDualQuaternion::exp(&sp.displacement).unwrap());
    }

    #[test]
    fn pose_error_examples() {
        let pose = UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&Vec3::new(0.3, 0.2, 0.1)), &Vec3::new(1.0, 2.0, 3.0));
        let e = pose_error(&pose, &pose);
        assert!((e.scalar() - 1.0).abs() < 1e-15 && e.attitude.norm() < 1e-15 && e.position.norm() < 1e-14);
        let d = Vec3::new(0.5, -0.25, 1.0);
        let e = pose_error(&UnitDualQuaternion::identity(), &UnitDualQuaternion::from_translation(&d));
        assert!((e.position - d).norm() < 1e-15);
    }

    #[test]
    fn hover_wrench_at_equilibrium() {
        let b = body();
        let s = DualState::default();
        let e = pose_error(&s.pose, &s.pose);
        let w = control_wrench(&s, &e, &gains(), &b);
        assert!(w.real.norm() < 1e-15);
        assert!((w.dual - Vec3::new(0.0, 0.0, -9.81)).norm() < 1e-12);
    }

    #[test]
    fn damping_wrench_term_by_term() {
        let b = body();
        let k = 0.7;
        let g = ControllerGains { damping: DualMatrix::scalar(k, k), ..gains() };
        let pose = UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&Vec3::new(0.4, -0.3, 0.2)), &Vec3::new(1.0, 0.0, 0.0));
        let twist = DualVector::new(Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.1, -0.7));
        let s = DualState::new(pose, twist);
        let w = control_wrench(&s, &pose_error(&pose, &pose), &g, &b);
        let jw = b.inertia() * twist.real;
        let gyro = twist.real.cross(&jw);
        let coriolis = twist.real.cross(&(b.mass() * twist.dual));
        let grav = pose.rotation().inverse_rotate(&(b.mass() * b.gravity() * e_z()));
        assert!((w.real - (gyro - k * twist.real)).norm() < 1e-13);
        assert!((w.dual - (-grav + coriolis - k * twist.dual)).norm() < 1e-13);
    }

    #[test]
    fn lyapunov_examples() {
        let g = gains();
        let m = body().dual_inertia();
        let s = DualState::default();
        assert_eq!(lyapunov(&s, &pose_error(&s.pose, &s.pose), &g, &m).total, 0.0);
        let d = Vec3::new(0.3, 0.4, 0.0);
        let e = pose_error(&UnitDualQuaternion::identity(), &UnitDualQuaternion::from_translation(&d));
        let v = lyapunov(&DualState::new(UnitDualQuaternion::from_translation(&d), DualVector::zeros()), &e, &g, &m);
        assert!((v.total - 0.5 * 6.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn closed_loop_rate_matches_finite_difference() {
        let b = body();
        let g = gains();
        let m = b.dual_inertia();
        let target = UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&Vec3::new(0.1, 0.2, -0.3)), &Vec3::new(0.5, -0.5, -1.0));
        let mut s = DualState::new(
            UnitDualQuaternion::from_pose(&UnitQuaternion::exp(&Vec3::new(-0.5, 0.3, 0.8)), &Vec3::new(0.0, 0.2, -0.4)),
            DualVector::new(Vec3::new(2.0, -1.0, 0.5), Vec3::new(0.5, 1.0, -1.5)),
        );
        let law = |x: &DualState| control_wrench(x, &pose_error(&target, &x.pose), &g, &b);
        for _ in 0..200 {
            let h = 1e-4;
            let v0 = lyapunov(&s, &pose_error(&target, &s.pose), &g, &m);
            let fwd = s.rk4_step(h, &b, law);
            let back = s.rk4_step(-h, &b, law);
            let vf = lyapunov(&fwd, &pose_error(&target, &fwd.pose), &g, &m).total;
            let vb = lyapunov(&back, &pose_error(&target, &back.pose), &g, &m).total;
            let fd = (vf - vb) / (2.0 * h);
            assert!((fd - v0.rate).abs() <= 1e-6 * v0.rate.abs().max(1e-3), "{fd} vs {}", v0.rate);
            s = s.rk4_step(1e-2, &b, law);
        }
    }

    #[test]
    fn jump_certificate_examples() {
        let b = body();
        let m = b.dual_inertia();
        let g = gains();
        let twist = DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0));
        let plastic = crate::impact::ContactSpec::new(Vec3::new(0.0, 0.0, 0.05), -Vec3::z(), 0.0, 0.0).unwrap();
        let hit = impulse_dq(&twist, &plastic, &UnitQuaternion::identity(), &m).unwrap();
        let after = crate::impact::reset_dq(&twist, &hit, &m);
        let c = jump_certificate(&twist, &after, &hit, &m, &g, 0.0, &g.admittance);
        assert!((c.kinetic_change + 0.5 * hit.magnitude.powi(2) * hit.inverse_mass).abs() < 1e-12);
        assert!((c.kinetic_change - c.kinetic_change_closed).abs() < 1e-12);
        let elastic = crate::impact::ContactSpec::elastic_unchecked(Vec3::new(0.0, 0.0, 0.05), -Vec3::z());
        let hit = impulse_dq(&twist, &elastic, &UnitQuaternion::identity(), &m).unwrap();
        let after = crate::impact::reset_dq(&twist, &hit, &m);
        let c = jump_certificate(&twist, &after, &hit, &m, &g, 0.0, &g.admittance);
        assert!(c.kinetic_change.abs() < 1e-12 && c.kinetic_change_closed == 0.0);
    }

    #[test]
    fn jump_certificate_random_frictionless() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = gains();
        for _ in 0..2000 {
            let s = random_impact(&mut rng, 0.0);
            let m = s.body.dual_inertia();
            let twist = s.state.to_dual().twist;
            let hit = impulse_dq(&twist, &s.contact, &s.state.attitude, &m).unwrap();
            let after = crate::impact::reset_dq(&twist, &hit, &m);
            let c = jump_certificate(&twist, &after, &hit, &m, &g, 0.0, &g.admittance);
            let scale = m.kinetic_energy(&twist).max(1.0);
            assert!((c.kinetic_change - c.kinetic_change_closed).abs() < 1e-10 * scale);
            assert!((c.kinetic_change - c.kinetic_change_wrench).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn gain_bound_examples() {
        let g = gains();
        let b = gain_bounds(&Vec3::zeros(), &Vec3::x(), 1.0, &g);
        assert_eq!(b.attitude, g.admittance_cap);
        let b = gain_bounds(&Vec3::x(), &Vec3::x(), 1.0, &g);
        assert!((b.attitude - 2f64.sqrt()).abs() < 1e-15);
        let b2 = gain_bounds(&Vec3::x(), &Vec3::x(), 2.0, &g);
        assert!((b2.attitude / b.attitude - 2f64.sqrt()).abs() < 1e-14);
        assert!((b2.position / b.position - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(gain_bounds(&Vec3::x(), &Vec3::x(), -1.0, &g).attitude, 0.0);
    }

    #[test]
    fn baseline_hover_at_setpoint() {
        let b = body();
        let s = ClassicState {
            position: Vec3::new(0.0, 0.0, -1.0),
            velocity: Vec3::zeros(),
            attitude: UnitQuaternion::exp(&Vec3::new(0.0, 0.0, 0.7)),
            angular_velocity: Vec3::zeros(),
        };
        let sp = BaselineSetpoint { position: s.position, attitude: s.attitude };
        let (f, tau) = baseline_controller(&s, &sp, &BaselineGains::matched(&gains()), &b);
        assert!((f - 9.81).abs() < 1e-12);
        assert!(tau.norm() < 1e-9, "{tau:?}");
    }

    #[test]
    fn baseline_position_step_matches_pd() {
        let b = body();
        let g = BaselineGains::matched(&gains());
        let s = ClassicState {
            position: Vec3::new(0.0, 0.0, 0.2),
            velocity: Vec3::new(0.0, 0.0, 0.1),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vec3::zeros(),
        };
        let sp = BaselineSetpoint { position: Vec3::zeros(), attitude: UnitQuaternion::identity() };
        let (f, tau) = baseline_controller(&s, &sp, &g, &b);
        // vertical error only: thrust = m g + k_p e + k_d v, no torque
        assert!((f - (9.81 + 6.0 * 0.2 + 5.0 * 0.1)).abs() < 1e-12);
        assert!(tau.norm() < 1e-9);
        let sim = |x: &ClassicState| baseline_controller(x, &sp, &g, &b);
        let (f2, _) = sim(&ClassicState { position: Vec3::new(0.0, 0.0, -0.2), velocity: Vec3::zeros(), ..s });
        assert!((f2 - (9.81 - 1.2)).abs() < 1e-12);
        // closed loop pulls back to the setpoint
        let mut x = s;
        for _ in 0..5000 {
            x = x.rk4_step(1e-3, &b, sim);
        }
        assert!(x.position.norm() < 1e-3);
        let _ = thrust_wrench(f, &tau);
    }

    #[test]
    fn thrust_axis_attitude() {
        let heading = UnitQuaternion::exp(&Vec3::new(0.0, 0.0, 0.3));
        let q = attitude_from_thrust_axis(&Vec3::z(), &heading);
        assert!((q.conjugate() * heading).log().norm() < 1e-12);
        let axis = Vec3::new(0.2, -0.1, 1.0).normalize();
        let q = attitude_from_thrust_axis(&axis, &heading);
        assert!((q.rotate(&Vec3::z()) - axis).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn braking_matches_matrix_apply(w in arb_vec(5.0), v in arb_vec(5.0), gw in 0.01..1.0f64, gv in 0.01..1.0f64) {
            let gamma = DualMatrix::from_diagonals(&Vec3::new(gw, 2.0 * gw, 0.5 * gw), &Vec3::new(gv, gv, 3.0 * gv));
            let d = braking_displacement(&DualVector::new(w, v), &gamma);
            prop_assert_eq!(d.real, gamma.real * w);
            prop_assert_eq!(d.dual, gamma.dual * v);
        }

        #[test]
        fn pose_error_matches_homogeneous(target in arb_pose(), pose in arb_pose()) {
            let e = pose_error(&target, &pose);
            let (rd, pd) = target.to_pose();
            let (r, p) = pose.to_pose();
            let expected = rd.to_rotation_matrix().transpose() * (p - pd);
            prop_assert!((e.position - expected).norm() < 1e-10);
            prop_assert!((e.position_body - r.to_rotation_matrix().transpose() * (p - pd)).norm() < 1e-10);
            prop_assert!(e.scalar() >= 0.0);
        }

        #[test]
        fn lyapunov_is_sum_of_parts(target in arb_pose(), pose in arb_pose(), w in arb_vec(3.0), v in arb_vec(3.0)) {
            let g = gains();
            let m = body().dual_inertia();
            let s = DualState::new(pose, DualVector::new(w, v));
            let e = pose_error(&target, &pose);
            let l = lyapunov(&s, &e, &g, &m);
            let kin = 0.5 * (w.dot(&(m.inertia() * w)) + m.mass() * v.norm_squared());
            let pos = 2.0 * (1.0 - e.scalar()) + 3.0 * (pose.translation() - target.translation()).norm_squared();
            prop_assert!((l.total - (kin + pos)).abs() < 1e-9 * (1.0 + l.total));
            prop_assert!(l.total >= 0.0);
        }

        #[test]
        fn kinetic_energy_orthogonal_to_gyroscopic(w in arb_vec(10.0), v in arb_vec(10.0)) {
            let m = body().dual_inertia();
            let x = DualVector::new(w, v);
            let h = m.apply(&x);
            prop_assert!(x.dot(&x.cross_adjoint(&h)).abs() < 1e-12 * (1.0 + h.norm() * x.norm()));
        }

        #[test]
        fn small_angle_potential(w in arb_vec(0.17), v in arb_vec(0.3)) {
            let g = gains();
            let d = DualVector::new(w, v);
            let shift = UnitDualQuaternion::exp(&d).unwrap();
            let e = pose_error(&shift, &UnitDualQuaternion::identity());
            let exact = potential(&e, &g);
            let approx = 0.25 * g.attitude_stiffness * w.norm_squared() + 0.5 * g.position_stiffness * v.norm_squared();
            let n = d.norm();
            prop_assert!((exact - approx).abs() <= 0.5 * n.powi(4) + 1e-15);
            prop_assert!(exact <= approx + 1e-15);
        }

        #[test]
        fn bounded_gains_keep_injection_below_budget(w in arb_vec(10.0), v in arb_vec(5.0), budget in 0.01..10.0f64) {
            let g = gains();
            let b = gain_bounds(&w, &v, budget, &g);
            let gamma = clamp_admittance(&DualMatrix::scalar(100.0, 100.0), &b, BOUND_MARGIN);
            prop_assert!(injected_potential(&DualVector::new(w, v), &gamma, &g) < budget);
        }
    }
}
