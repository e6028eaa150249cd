//! Hybrid executor: RK4 flow under closed-loop control, guard detection on
//! the signed distance to a plane, event localization by bisection, impulsive
//! jumps, and a resting-contact fallback against Zeno behaviour.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{
    self, clamp_admittance, control_wrench, gain_bounds, jump_certificate, make_setpoint, pose_error,
    BaselineGains, BaselineSetpoint, ControllerGains, JumpCertificate, LyapunovSample, BOUND_MARGIN,
};
use crate::dualquat::{DualVector, UnitDualQuaternion};
use crate::dynamics::{thrust_wrench, BodyParams, DualState, WrenchLimits};
use crate::impact::{
    impulse_coupled_oracle, impulse_dq, impulse_matrix, reset_dq, reset_matrix, ContactSpec, ImpulseResult,
    RESTING_THRESHOLD,
};
use crate::{Error, Result, Vec3};

/// Plane `n·x = d` with the body hull given as body-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldGeometry {
    normal: Vec3,
    offset: f64,
    points: Vec<Vec3>,
}

impl WorldGeometry {
    /// `normal` points from the surface into the free half-space.
    pub fn new(normal: Vec3, offset: f64, points: Vec<Vec3>) -> Result<Self> {
        let deviation = (normal.norm() - 1.0).abs();
        if !(deviation <= 1e-9) {
            return Err(Error::NonUnitDirection { deviation });
        }
        if points.is_empty() {
            return Err(Error::InvalidContact("at least one hull point is required".into()));
        }
        if !offset.is_finite() || points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidContact("geometry must be finite".into()));
        }
        Ok(Self { normal, offset, points })
    }

    /// Quadrotor hull: four arm tips at `(±arm, ±arm, arm_drop)` plus a
    /// point `belly` below the centre of mass.
    pub fn quad_hull(normal: Vec3, offset: f64, arm: f64, arm_drop: f64, belly: f64) -> Result<Self> {
        let points = vec![
            Vec3::new(arm, arm, arm_drop),
            Vec3::new(arm, -arm, arm_drop),
            Vec3::new(-arm, -arm, arm_drop),
            Vec3::new(-arm, arm, arm_drop),
            Vec3::new(0.0, 0.0, belly),
        ];
        Self::new(normal, offset, points)
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point_distance(&self, pose: &UnitDualQuaternion, index: usize) -> f64 {
        self.normal.dot(&pose.transform_point(&self.points[index])) - self.offset
    }
}

/// `φ = min_i n·(p + q⊙r_i) − d` and the index of the minimizing point.
pub fn signed_distance(pose: &UnitDualQuaternion, geom: &WorldGeometry) -> (f64, usize) {
    (0..geom.points.len())
        .map(|i| (geom.point_distance(pose, i), i))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseModel {
    Decoupled,
    Matrix,
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Dq,
    Baseline,
    /// No actuation at all; used for ballistic checks.
    Passive,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:ident => $name:literal),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::InvalidConfig(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(ImpulseModel, "impulse model", Decoupled => "decoupled", Matrix => "matrix", Coupled => "coupled");
keyword_enum!(ControllerKind, "controller", Dq => "dq", Baseline => "baseline", Passive => "passive");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Integration step (s).
    pub dt: f64,
    /// Episode length (s).
    pub t_end: f64,
    /// How long a latched recovery setpoint is held before returning to the
    /// reference (s).
    pub hold_time: f64,
    /// Jumps allowed inside one `zeno_window` before switching to resting contact.
    pub max_jumps_per_window: usize,
    /// Length of the jump-counting window (s).
    pub zeno_window: f64,
    /// Twist norm treated as divergence.
    pub blowup: f64,
    /// Event localization tolerance on φ (m).
    pub event_tolerance: f64,
    /// Bisection iteration cap.
    pub max_bisections: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 8.0,
            hold_time: 3.0,
            max_jumps_per_window: 20,
            zeno_window: 0.1,
            blowup: 1e3,
            event_tolerance: 1e-9,
            max_bisections: 60,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("sim.{what} must be positive, got {v}")))
            }
        };
        positive(self.dt, "dt")?;
        positive(self.t_end, "t_end")?;
        positive(self.hold_time, "hold_time")?;
        positive(self.zeno_window, "zeno_window")?;
        positive(self.blowup, "blowup")?;
        positive(self.event_tolerance, "event_tolerance")?;
        if self.max_jumps_per_window == 0 {
            return Err(Error::ZeroCount { what: "sim.max_jumps_per_window" });
        }
        if self.max_bisections == 0 {
            return Err(Error::ZeroCount { what: "sim.max_bisections" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub body: BodyParams,
    pub geometry: WorldGeometry,
    pub restitution: f64,
    pub friction: f64,
    pub controller: ControllerKind,
    pub gains: ControllerGains,
    pub baseline: BaselineGains,
    /// Actuator saturation. An active limit voids the flow dissipation bound.
    pub limits: Option<WrenchLimits>,
    pub impulse: ImpulseModel,
    pub initial: DualState,
    /// Hover reference used before the first impact and after hand-back.
    pub reference: UnitDualQuaternion,
    pub sim: SimParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridState {
    pub state: DualState,
    pub t: f64,
    pub j: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Plain flow sample.
    Flow,
    /// Sample on the guard surface at the end of a localized sub-step.
    Guard,
    /// Post-jump sample.
    Impact,
    /// First sample after the setpoint was handed back to the reference.
    Handback,
    /// Sample touched by the resting-contact projection.
    Rest,
}

impl Event {
    pub fn label(&self) -> &'static str {
        match self {
            Event::Flow => "flow",
            Event::Guard => "guard",
            Event::Impact => "impact",
            Event::Handback => "handback",
            Event::Rest => "rest",
        }
    }

    /// Whether the transition into this sample is pure closed-loop flow
    /// with an unchanged setpoint.
    pub fn is_flow(&self) -> bool {
        matches!(self, Event::Flow | Event::Guard)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub j: u32,
    pub pose: UnitDualQuaternion,
    pub twist: DualVector,
    pub lyapunov: LyapunovSample,
    /// Cumulative `∫⟨ξ̂, K_d∘ξ̂⟩dt` along flows (J).
    pub dissipated: f64,
    pub wrench: DualVector,
    pub distance: f64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    /// Jump count after this jump.
    pub j: u32,
    pub point: usize,
    pub impulse: ImpulseResult,
    pub before: DualVector,
    pub after: DualVector,
    pub v_before: f64,
    pub v_after: f64,
    pub certificate: Option<JumpCertificate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpRecord>,
    pub reference: UnitDualQuaternion,
    pub controller: ControllerKind,
    /// Time resting-contact mode was entered, if ever.
    pub resting_since: Option<f64>,
    /// Reason the episode was abandoned, if it was.
    pub failure: Option<String>,
}

impl EpisodeLog {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn first_impact_time(&self) -> Option<f64> {
        self.jumps.first().map(|j| j.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    /// Pre-impact: gravity compensation only.
    Coast,
    Dq(UnitDualQuaternion),
    Baseline(BaselineSetpoint),
}

/// Controller with its latched setpoint and hand-back timer.
#[derive(Debug, Clone)]
pub struct Supervisor {
    kind: ControllerKind,
    gains: ControllerGains,
    baseline: BaselineGains,
    limits: Option<WrenchLimits>,
    target: Target,
    reference: UnitDualQuaternion,
    hold_until: Option<f64>,
}

impl Supervisor {
    pub fn new(cfg: &EpisodeConfig) -> Self {
        Self {
            kind: cfg.controller,
            gains: cfg.gains,
            baseline: cfg.baseline,
            limits: cfg.limits,
            target: Target::Coast,
            reference: cfg.reference,
            hold_until: None,
        }
    }

    /// Pose the controller currently regulates to, if any.
    pub fn target_pose(&self) -> Option<UnitDualQuaternion> {
        match self.target {
            Target::Coast => None,
            Target::Dq(p) => Some(p),
            Target::Baseline(sp) => Some(sp.pose()),
        }
    }

    /// Actuation wrench and dissipation integrand at `s`. The integrand is
    /// the nominal one even when the wrench saturates.
    pub fn wrench(&self, s: &DualState, body: &BodyParams) -> (DualVector, f64) {
        let (w, rate) = self.nominal_wrench(s, body);
        match &self.limits {
            Some(l) => (l.clamp(&w), rate),
            None => (w, rate),
        }
    }

    fn nominal_wrench(&self, s: &DualState, body: &BodyParams) -> (DualVector, f64) {
        match (self.kind, self.target) {
            (ControllerKind::Passive, _) => (DualVector::zeros(), 0.0),
            (_, Target::Coast) => (controller::coast_wrench(s, body), 0.0),
            (_, Target::Dq(target)) => {
                let err = pose_error(&target, &s.pose);
                (
                    control_wrench(s, &err, &self.gains, body),
                    controller::dissipation_rate(&s.twist, &self.gains.damping),
                )
            }
            (_, Target::Baseline(sp)) => {
                let (f, tau) = controller::baseline_controller(&s.to_classic(), &sp, &self.baseline, body);
                (thrust_wrench(f, &tau), 0.0)
            }
        }
    }

    pub fn lyapunov(&self, s: &DualState, body: &BodyParams) -> LyapunovSample {
        let inertia = body.dual_inertia();
        match self.target_pose() {
            Some(target) if self.kind != ControllerKind::Passive => {
                let mut l = controller::lyapunov(s, &pose_error(&target, &s.pose), &self.gains, &inertia);
                if self.kind == ControllerKind::Baseline {
                    l.rate = f64::NAN;
                }
                l
            }
            _ => {
                let kinetic = inertia.kinetic_energy(&s.twist);
                LyapunovSample { total: kinetic, potential: 0.0, kinetic, rate: 0.0 }
            }
        }
    }

    fn potential(&self, pose: &UnitDualQuaternion) -> f64 {
        match self.target_pose() {
            Some(target) if self.kind != ControllerKind::Passive => {
                controller::potential(&pose_error(&target, pose), &self.gains)
            }
            _ => 0.0,
        }
    }

    /// Latches a new recovery setpoint after a jump and returns the jump
    /// certificate for the dual controller.
    fn on_impact(
        &mut self,
        t: f64,
        s_after: &DualState,
        before: &DualVector,
        impulse: &ImpulseResult,
        body: &BodyParams,
        hold_time: f64,
    ) -> Result<Option<JumpCertificate>> {
        if self.kind == ControllerKind::Passive {
            return Ok(None);
        }
        let inertia = body.dual_inertia();
        let after = s_after.twist;
        let potential_before = self.potential(&s_after.pose);
        let dissipated = inertia.kinetic_energy(before) - inertia.kinetic_energy(&after);
        let bounds = gain_bounds(&after.real, &after.dual, dissipated + potential_before, &self.gains);
        let gamma = clamp_admittance(&self.gains.admittance, &bounds, BOUND_MARGIN);
        self.hold_until = Some(t + hold_time);
        match self.kind {
            ControllerKind::Dq => {
                let sp = make_setpoint(&after, &s_after.pose, &gamma, t)?;
                self.target = Target::Dq(sp.target);
                Ok(Some(jump_certificate(before, &after, impulse, &inertia, &self.gains, potential_before, &gamma)))
            }
            ControllerKind::Baseline => {
                self.target = Target::Baseline(BaselineSetpoint::latch(&s_after.to_classic(), &gamma));
                Ok(None)
            }
            ControllerKind::Passive => Ok(None),
        }
    }

    /// Returns true when the setpoint was handed back at time `t`.
    fn maybe_hand_back(&mut self, t: f64) -> bool {
        match self.hold_until {
            Some(until) if t >= until => {
                self.hold_until = None;
                self.target = match self.kind {
                    ControllerKind::Dq => Target::Dq(self.reference),
                    _ => Target::Baseline(BaselineSetpoint::from_pose(&self.reference)),
                };
                true
            }
            _ => false,
        }
    }
}

/// One RK4 step of the closed-loop flow with the control law evaluated at
/// every stage. Returns the new state and the dissipation increment.
pub fn step_flow(x: &HybridState, supervisor: &Supervisor, body: &BodyParams, dt: f64) -> (HybridState, f64) {
    let (state, dissipated) = x.state.rk4_step_with(dt, body, |s| supervisor.wrench(s, body));
    (HybridState { state, t: x.t + dt, j: x.j }, dissipated)
}

/// Bisection on the sub-step length until the state lies on the guard
/// within `tolerance`. The returned state is on the non-penetrating side.
pub fn locate_event(
    before: &HybridState,
    step: f64,
    geom: &WorldGeometry,
    tolerance: f64,
    max_iterations: usize,
    mut flow: impl FnMut(&HybridState, f64) -> (HybridState, f64),
) -> Result<(HybridState, f64)> {
    let phi_before = signed_distance(&before.state.pose, geom).0;
    if phi_before.abs() <= tolerance {
        return Ok((*before, 0.0));
    }
    let (after, _) = flow(before, step);
    let phi_after = signed_distance(&after.state.pose, geom).0;
    if !(phi_before > 0.0 && phi_after < 0.0) {
        return Err(Error::NotBracketed { before: phi_before, after: phi_after });
    }
    let (mut lo, mut hi) = (0.0, step);
    let mut best = (*before, 0.0);
    for _ in 0..max_iterations {
        let mid = 0.5 * (lo + hi);
        let (x, d) = flow(before, mid);
        let phi = signed_distance(&x.state.pose, geom).0;
        if phi < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            best = (x, d);
            if phi <= tolerance {
                break;
            }
        }
    }
    Ok(best)
}

fn contact_for(cfg: &EpisodeConfig, index: usize, restitution: f64, friction: f64) -> Result<ContactSpec> {
    ContactSpec::new(cfg.geometry.points[index], cfg.geometry.normal, restitution, friction)
}

fn resolve_impulse(cfg: &EpisodeConfig, s: &DualState, contact: &ContactSpec) -> Result<(ImpulseResult, DualVector)> {
    let inertia = cfg.body.dual_inertia();
    let q = s.pose.rotation();
    match cfg.impulse {
        ImpulseModel::Decoupled => {
            let imp = impulse_dq(&s.twist, contact, &q, &inertia)?;
            Ok((imp, reset_dq(&s.twist, &imp, &inertia)))
        }
        ImpulseModel::Coupled => match impulse_coupled_oracle(&s.twist, contact, &q, &inertia) {
            Ok(imp) => Ok((imp, reset_dq(&s.twist, &imp, &inertia))),
            Err(Error::CoupledDenominator { denominator }) => {
                log::warn!("coupled impulse denominator {denominator:e}; falling back to the decoupled model");
                let imp = impulse_dq(&s.twist, contact, &q, &inertia)?;
                Ok((imp, reset_dq(&s.twist, &imp, &inertia)))
            }
            Err(e) => Err(e),
        },
        ImpulseModel::Matrix => {
            let classic = s.to_classic();
            let imp = impulse_matrix(&classic, contact, &cfg.body)?;
            let (v, w) = reset_matrix(&classic, &imp, &cfg.body);
            Ok((imp, DualVector::new(w, q.inverse_rotate(&v))))
        }
    }
}

fn closing_speed(twist: &DualVector, pose: &UnitDualQuaternion, geom: &WorldGeometry, index: usize) -> f64 {
    let n_body = pose.rotation().inverse_rotate(&geom.normal);
    let r = geom.points[index];
    twist.dot(&DualVector::new(r.cross(&n_body), n_body))
}

/// Frictionless plastic clamp of every penetrating or touching point plus a
/// position projection back onto the surface.
fn rest_projection(s: &mut DualState, cfg: &EpisodeConfig) {
    let geom = &cfg.geometry;
    let (phi, _) = signed_distance(&s.pose, geom);
    if phi < 0.0 {
        let shift = -phi * geom.normal;
        s.pose = UnitDualQuaternion::from_pose(&s.pose.rotation(), &(s.pose.translation() + shift));
    }
    let inertia = cfg.body.dual_inertia();
    let tol = cfg.sim.event_tolerance.max(1e-9) * 10.0;
    // a few sweeps settle simultaneous points
    for _ in 0..4 {
        let mut changed = false;
        for i in 0..geom.points.len() {
            if geom.point_distance(&s.pose, i) > tol {
                continue;
            }
            let n_body = s.pose.rotation().inverse_rotate(&geom.normal);
            let r = geom.points[i];
            let s_n = DualVector::new(r.cross(&n_body), n_body);
            let vn = s.twist.dot(&s_n);
            if vn < 0.0 {
                let lambda = -vn / inertia.apply_inverse(&s_n).dot(&s_n);
                s.twist = s.twist + inertia.apply_inverse(&(s_n * lambda));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

struct Runner<'a> {
    cfg: &'a EpisodeConfig,
    supervisor: Supervisor,
    x: HybridState,
    dissipated: f64,
    recent_jumps: VecDeque<f64>,
    log: EpisodeLog,
}

impl<'a> Runner<'a> {
    fn record(&mut self, event: Event) {
        let s = self.x.state;
        let body = &self.cfg.body;
        self.log.samples.push(Sample {
            t: self.x.t,
            j: self.x.j,
            pose: s.pose,
            twist: s.twist,
            lyapunov: self.supervisor.lyapunov(&s, body),
            dissipated: self.dissipated,
            wrench: self.supervisor.wrench(&s, body).0,
            distance: signed_distance(&s.pose, &self.cfg.geometry).0,
            event,
        });
    }

    fn enter_rest(&mut self, why: &str) {
        if self.log.resting_since.is_none() {
            log::info!("t = {:.4} s: entering resting contact ({why})", self.x.t);
            self.log.resting_since = Some(self.x.t);
        }
        rest_projection(&mut self.x.state, self.cfg);
    }

    /// Applies impulses at every touching, approaching hull point in argmin
    /// order. Returns the number of impulses applied.
    fn apply_jumps(&mut self) -> Result<usize> {
        let cfg = self.cfg;
        let geom = &cfg.geometry;
        let tol = cfg.sim.event_tolerance;
        let mut order: Vec<(f64, usize)> =
            (0..geom.points.len()).map(|i| (geom.point_distance(&self.x.state.pose, i), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut applied = 0;
        let mut touching_at_rest = false;
        for &(phi, i) in &order {
            if phi > tol {
                break;
            }
            let v_before = closing_speed(&self.x.state.twist, &self.x.state.pose, geom, i);
            if v_before >= -RESTING_THRESHOLD {
                touching_at_rest = touching_at_rest || v_before.abs() < RESTING_THRESHOLD;
                continue;
            }
            let contact = contact_for(cfg, i, cfg.restitution, cfg.friction)?;
            let (impulse, after) = resolve_impulse(cfg, &self.x.state, &contact)?;
            let before = self.x.state.twist;
            self.x.state.twist = after;
            self.x.j += 1;
            let certificate =
                self.supervisor.on_impact(self.x.t, &self.x.state, &before, &impulse, &cfg.body, cfg.sim.hold_time)?;
            let v_after = closing_speed(&after, &self.x.state.pose, geom, i);
            self.log.jumps.push(JumpRecord {
                t: self.x.t,
                j: self.x.j,
                point: i,
                impulse,
                before,
                after,
                v_before,
                v_after,
                certificate,
            });
            self.recent_jumps.push_back(self.x.t);
            applied += 1;
            self.record(Event::Impact);
            if v_after.abs() < RESTING_THRESHOLD {
                self.enter_rest("post-impact normal speed below the resting threshold");
            }
        }
        if applied > 1 {
            log::warn!("t = {:.4} s: {applied} simultaneous contacts resolved sequentially", self.x.t);
        }
        while let Some(&t0) = self.recent_jumps.front() {
            if t0 <= self.x.t - cfg.sim.zeno_window {
                self.recent_jumps.pop_front();
            } else {
                break;
            }
        }
        if self.recent_jumps.len() > cfg.sim.max_jumps_per_window {
            self.enter_rest("jump rate exceeded the Zeno guard");
        }
        if applied == 0 && touching_at_rest {
            self.enter_rest("touching contact without closing speed");
        }
        Ok(applied)
    }

    fn diverged(&self, x: &HybridState) -> bool {
        !(x.state.twist.is_finite() && x.state.pose.as_dual_quaternion().is_finite())
            || x.state.twist.norm() > self.cfg.sim.blowup
    }

    fn run(mut self) -> EpisodeLog {
        let cfg = self.cfg;
        let body = &cfg.body;
        let sim = &cfg.sim;
        self.record(Event::Flow);
        let eps = 1e-12 * sim.t_end.max(1.0);
        while self.x.t < sim.t_end - eps {
            let handed_back = self.supervisor.maybe_hand_back(self.x.t);
            let h = sim.dt.min(sim.t_end - self.x.t);
            let (next, d) = step_flow(&self.x, &self.supervisor, body, h);
            if self.diverged(&next) {
                self.log.failure = Some(format!("integrator diverged at t = {:.4} s", next.t));
                break;
            }
            let resting = self.log.resting_since.is_some();
            let phi_next = signed_distance(&next.state.pose, &cfg.geometry).0;
            if resting {
                self.x = next;
                self.dissipated += d;
                if phi_next < 0.0 {
                    rest_projection(&mut self.x.state, cfg);
                    self.record(Event::Rest);
                } else {
                    self.record(if handed_back { Event::Handback } else { Event::Flow });
                }
                continue;
            }
            if phi_next >= 0.0 {
                self.x = next;
                self.dissipated += d;
                self.record(if handed_back { Event::Handback } else { Event::Flow });
                continue;
            }
            let located = locate_event(&self.x, h, &cfg.geometry, sim.event_tolerance, sim.max_bisections, |x, dt| {
                step_flow(x, &self.supervisor, body, dt)
            });
            let (at_guard, d) = match located {
                Ok(v) => v,
                Err(e) => {
                    self.log.failure = Some(format!("event localization failed at t = {:.4} s: {e}", self.x.t));
                    break;
                }
            };
            let moved = at_guard.t > self.x.t;
            self.x = at_guard;
            self.dissipated += d;
            if moved {
                self.record(if handed_back { Event::Handback } else { Event::Guard });
            }
            match self.apply_jumps() {
                Ok(0) => {
                    if self.log.resting_since.is_none() {
                        // on the guard but nothing to resolve: avoid stalling
                        self.enter_rest("guard reached without an approaching contact");
                    }
                    if !moved {
                        // no progress possible from here without the projection
                        let (next, d) = step_flow(&self.x, &self.supervisor, body, h);
                        self.x = next;
                        self.dissipated += d;
                        rest_projection(&mut self.x.state, cfg);
                        self.record(Event::Rest);
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    self.log.failure = Some(format!("jump failed at t = {:.4} s: {e}", self.x.t));
                    break;
                }
            }
        }
        self.log
    }
}

/// Runs one hybrid episode from `cfg.initial` until `cfg.sim.t_end`.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeLog> {
    cfg.sim.validate()?;
    if !(0.0..1.0).contains(&cfg.restitution) || !(cfg.friction >= 0.0) {
        return Err(Error::InvalidContact(format!(
            "restitution {} must lie in [0, 1) and friction {} must be non-negative",
            cfg.restitution, cfg.friction
        )));
    }
    let phi0 = signed_distance(&cfg.initial.pose, &cfg.geometry).0;
    if phi0 < 0.0 {
        return Err(Error::InvalidConfig(format!("initial pose penetrates the surface (φ = {phi0:e} m)")));
    }
    let runner = Runner {
        cfg,
        supervisor: Supervisor::new(cfg),
        x: HybridState { state: cfg.initial, t: 0.0, j: 0 },
        dissipated: 0.0,
        recent_jumps: VecDeque::new(),
        log: EpisodeLog {
            samples: Vec::with_capacity((cfg.sim.t_end / cfg.sim.dt) as usize + 16),
            jumps: Vec::new(),
            reference: cfg.reference,
            controller: cfg.controller,
            resting_since: None,
            failure: None,
        },
    };
    Ok(runner.run())
}
