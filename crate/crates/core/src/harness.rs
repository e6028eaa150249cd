//! Experiment orchestration: scenario construction, Table-style metrics,
//! seeded Monte Carlo studies and Lyapunov audits of episode logs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Config, ExperimentSection};
use crate::dualquat::{DualVector, UnitDualQuaternion};
use crate::dynamics::{BodyParams, DualInertia, DualState};
use crate::hybridsim::{run_episode, signed_distance, ControllerKind, EpisodeConfig, EpisodeLog, Event, ImpulseModel};
use crate::quat::UnitQuaternion;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub peak_l2: f64,
    pub rmse_l2: f64,
    pub peak_ek: f64,
    /// Time from the window start until the error stays below the
    /// threshold for the dwell time; `None` if that never happens.
    pub settling_time: Option<f64>,
    /// Window length, used to censor a missing settling time.
    pub window: f64,
    pub failed: bool,
}

impl Metrics {
    pub fn settling_or_window(&self) -> f64 {
        self.settling_time.unwrap_or(self.window)
    }
}

/// Metrics over the samples with `t ≥ start`.
pub fn metrics_from_series(
    t: &[f64],
    error: &[f64],
    kinetic: &[f64],
    start: f64,
    threshold: f64,
    dwell: f64,
) -> Result<Metrics> {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= start).collect();
    let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
        return Err(Error::EmptyWindow);
    };
    let mut peak_l2: f64 = 0.0;
    let mut peak_ek: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut run_start: Option<f64> = None;
    let mut settled = None;
    for &i in &idx {
        peak_l2 = peak_l2.max(error[i]);
        peak_ek = peak_ek.max(kinetic[i]);
        sum_sq += error[i] * error[i];
        if error[i] < threshold {
            let s = *run_start.get_or_insert(t[i]);
            if settled.is_none() && t[i] - s >= dwell - 1e-12 {
                settled = Some(s - start);
            }
        } else {
            run_start = None;
        }
    }
    Ok(Metrics {
        peak_l2,
        rmse_l2: (sum_sq / idx.len() as f64).sqrt(),
        peak_ek,
        settling_time: settled,
        window: t[last] - t[first].min(start),
        failed: false,
    })
}

/// Position error against `reference` and kinetic energy over the
/// post-impact window: every sample after the first jump (all samples if
/// the episode never touched the surface).
pub fn compute_metrics(
    log: &EpisodeLog,
    reference: &Vec3,
    inertia: &DualInertia,
    threshold: f64,
    dwell: f64,
) -> Result<Metrics> {
    let min_j = u32::from(!log.jumps.is_empty());
    let window: Vec<_> = log.samples.iter().filter(|s| s.j >= min_j).collect();
    let t: Vec<f64> = window.iter().map(|s| s.t).collect();
    let e: Vec<f64> = window.iter().map(|s| (s.pose.translation() - reference).norm()).collect();
    let k: Vec<f64> = window.iter().map(|s| inertia.kinetic_energy(&s.twist)).collect();
    let start = t.first().copied().ok_or(Error::EmptyWindow)?;
    let mut m = metrics_from_series(&t, &e, &k, start, threshold, dwell)?;
    m.failed = log.failed();
    Ok(m)
}

/// Per-trial perturbation of the nominal approach.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialJitter {
    pub lateral: [f64; 2],
    /// Roll, pitch, yaw offsets (rad).
    pub attitude: [f64; 3],
    /// Incidence-angle offset (rad).
    pub incidence: f64,
    /// Direction of the tangential approach component about the normal (rad).
    pub heading: f64,
}

/// Deterministic jitter of trial `index`; each trial draws from its own
/// ChaCha stream so the draw does not depend on scheduling.
pub fn trial_jitter(x: &ExperimentSection, seed: u64, index: usize) -> TrialJitter {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let sym = |rng: &mut ChaCha8Rng, half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let tilt = x.attitude_jitter_deg.to_radians();
    TrialJitter {
        lateral: [sym(&mut rng, x.position_jitter), sym(&mut rng, x.position_jitter)],
        attitude: [sym(&mut rng, tilt), sym(&mut rng, tilt), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)],
        incidence: sym(&mut rng, x.incidence_jitter_deg.to_radians()),
        heading: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let mut t1 = Vec3::x() - n * n.x;
    if t1.norm() < 1e-6 {
        t1 = Vec3::y() - n * n.y;
    }
    let t1 = t1.normalize();
    (t1, n.cross(&t1))
}

fn attitude_from_euler(rpy: [f64; 3]) -> UnitQuaternion {
    UnitQuaternion::exp(&(Vec3::z() * rpy[2])) * UnitQuaternion::exp(&(Vec3::y() * rpy[1]))
        * UnitQuaternion::exp(&(Vec3::x() * rpy[0]))
}

/// Builds the approach scenario: the hull clears the surface by
/// `approach_gap`, the body coasts towards it at `impact_speed` with the
/// configured incidence, and the starting pose is the hover reference.
pub fn build_episode(
    cfg: &Config,
    controller: ControllerKind,
    impulse: ImpulseModel,
    jitter: Option<&TrialJitter>,
) -> Result<EpisodeConfig> {
    cfg.validate()?;
    let j = jitter.copied().unwrap_or_default();
    let x = &cfg.experiment;
    let geometry = cfg.geometry.build()?;
    let n = *geometry.normal();
    let (t1, t2) = tangent_basis(&n);
    let base = x.attitude_deg.map(f64::to_radians);
    let attitude = attitude_from_euler([base[0] + j.attitude[0], base[1] + j.attitude[1], base[2] + j.attitude[2]]);
    let mut position = t1 * j.lateral[0] + t2 * j.lateral[1];
    let phi0 = signed_distance(&UnitDualQuaternion::from_pose(&attitude, &position), &geometry).0;
    position += n * (x.approach_gap - phi0);
    let theta = (x.incidence_deg.to_radians() + j.incidence).clamp(0.0, 89f64.to_radians());
    let lateral = t1 * j.heading.cos() + t2 * j.heading.sin();
    let velocity = (-n * theta.cos() + lateral * theta.sin()) * x.impact_speed;
    let pose = UnitDualQuaternion::from_pose(&attitude, &position);
    let initial = DualState::new(pose, DualVector::new(Vec3::zeros(), attitude.inverse_rotate(&velocity)));
    Ok(EpisodeConfig {
        body: BodyParams::try_from(cfg.body)?,
        geometry,
        restitution: cfg.contact.restitution,
        friction: cfg.contact.friction,
        controller,
        gains: cfg.controller.gains()?,
        baseline: cfg.baseline_gains()?,
        limits: cfg.controller.limits()?,
        impulse,
        initial,
        reference: pose,
        sim: cfg.sim,
    })
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: EpisodeLog,
    pub metrics: Metrics,
}

/// Runs one episode and evaluates it over the post-impact window.
pub fn run_scenario(ep: &EpisodeConfig, x: &ExperimentSection) -> Result<EpisodeOutcome> {
    let log = run_episode(ep)?;
    let metrics =
        compute_metrics(&log, &ep.reference.translation(), &ep.body.dual_inertia(), x.settle_threshold, x.settle_dwell)?;
    Ok(EpisodeOutcome { log, metrics })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub controller: ControllerKind,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub name: &'static str,
    pub candidate_mean: f64,
    pub candidate_std: f64,
    pub reference_mean: f64,
    pub reference_std: f64,
    /// `(reference − candidate) / reference × 100`.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub candidate: ControllerKind,
    pub reference: ControllerKind,
    pub impulse: ImpulseModel,
    /// Sorted by trial, candidate before reference.
    pub trials: Vec<TrialResult>,
    pub summary: Vec<MetricSummary>,
    pub failed: [usize; 2],
}

impl MonteCarloReport {
    pub fn all_improved(&self) -> bool {
        self.summary.iter().all(|m| m.improvement_pct > 0.0)
    }
}

pub const METRIC_NAMES: [&str; 4] = ["peak_l2_m", "rmse_l2_m", "peak_ek_J", "settling_s"];

fn metric_values(m: &Metrics) -> [f64; 4] {
    [m.peak_l2, m.rmse_l2, m.peak_ek, m.settling_or_window()]
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn improvement(reference: f64, candidate: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        (reference - candidate) / reference * 100.0
    }
}

/// Aggregates per-trial metrics given as consecutive (candidate, reference)
/// pairs; failed episodes are excluded from the means and counted
/// separately.
pub fn summarize(trials: &[TrialResult]) -> (Vec<MetricSummary>, [usize; 2]) {
    let cand: Vec<&TrialResult> = trials.iter().step_by(2).collect();
    let refr: Vec<&TrialResult> = trials.iter().skip(1).step_by(2).collect();
    let failed = [cand.iter().filter(|r| r.metrics.failed).count(), refr.iter().filter(|r| r.metrics.failed).count()];
    let summary = (0..4)
        .map(|k| {
            let cv: Vec<f64> = cand.iter().filter(|r| !r.metrics.failed).map(|r| metric_values(&r.metrics)[k]).collect();
            let rv: Vec<f64> = refr.iter().filter(|r| !r.metrics.failed).map(|r| metric_values(&r.metrics)[k]).collect();
            let (cm, cs) = mean_std(&cv);
            let (rm, rs) = mean_std(&rv);
            MetricSummary {
                name: METRIC_NAMES[k],
                candidate_mean: cm,
                candidate_std: cs,
                reference_mean: rm,
                reference_std: rs,
                improvement_pct: improvement(rm, cm),
            }
        })
        .collect();
    (summary, failed)
}

/// Seeded Monte Carlo study: every trial runs both controllers from the
/// same jittered initial condition with the same impulse model.
pub fn run_monte_carlo(
    cfg: &Config,
    candidate: ControllerKind,
    reference: ControllerKind,
    impulse: ImpulseModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::ZeroCount { what: "trials" });
    }
    cfg.validate()?;
    let per_trial: Vec<Result<[TrialResult; 2]>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let jitter = trial_jitter(&cfg.experiment, seed, i);
            let run = |kind| -> Result<TrialResult> {
                let ep = build_episode(cfg, kind, impulse, Some(&jitter))?;
                let out = run_scenario(&ep, &cfg.experiment)?;
                Ok(TrialResult { trial: i, controller: kind, metrics: out.metrics })
            };
            Ok([run(candidate)?, run(reference)?])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * trials);
    for r in per_trial {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| r.trial);
    let (summary, failed) = summarize(&rows);
    Ok(MonteCarloReport { candidate, reference, impulse, trials: rows, summary, failed })
}

/// Lyapunov bookkeeping extracted from a dual-controller episode.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovAudit {
    /// Largest `(ΔV + ΔD)/Δt` over flow steps (W); non-positive up to
    /// integration error when the flow certificate holds.
    pub max_flow_excess: f64,
    pub flow_steps: usize,
    /// `V⁺ − V⁻` at every impact.
    pub jump_changes: Vec<f64>,
    pub certificates_ok: bool,
}

pub fn audit_lyapunov(log: &EpisodeLog) -> LyapunovAudit {
    let mut max_flow_excess = f64::NEG_INFINITY;
    let mut flow_steps = 0;
    let mut jump_changes = Vec::new();
    for w in log.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.event == Event::Impact {
            jump_changes.push(b.lyapunov.total - a.lyapunov.total);
            continue;
        }
        let dt = b.t - a.t;
        if b.event.is_flow() && a.j == b.j && dt > 0.0 {
            let excess = ((b.lyapunov.total - a.lyapunov.total) + (b.dissipated - a.dissipated)) / dt;
            max_flow_excess = max_flow_excess.max(excess);
            flow_steps += 1;
        }
    }
    LyapunovAudit {
        max_flow_excess,
        flow_steps,
        jump_changes,
        certificates_ok: log.jumps.iter().all(|j| j.certificate.map(|c| c.ok).unwrap_or(true)),
    }
}
