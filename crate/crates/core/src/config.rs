//! Experiment configuration loaded from TOML. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::controller::{BaselineGains, ControllerGains};
use crate::dualquat::DualMatrix;
use crate::dynamics::{BodySpec, WrenchLimits};
use crate::hybridsim::{ControllerKind, ImpulseModel, SimParams, WorldGeometry};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub body: BodySpec,
    pub contact: ContactSection,
    pub geometry: GeometrySection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub baseline: Option<BaselineSection>,
    pub sim: SimParams,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactSection {
    pub restitution: f64,
    pub friction: f64,
    /// Impulse model of single-episode runs.
    pub impulse: ImpulseModel,
}

impl Default for ContactSection {
    fn default() -> Self {
        Self { restitution: 0.7, friction: 0.3, impulse: ImpulseModel::Decoupled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HullKind {
    Quad,
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Plane normal pointing into the free space (world frame, z down).
    pub normal: [f64; 3],
    pub offset: f64,
    pub hull: HullKind,
    pub arm: f64,
    pub arm_drop: f64,
    pub belly: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { normal: [0.0, 0.0, -1.0], offset: 0.0, hull: HullKind::Quad, arm: 0.12, arm_drop: 0.0, belly: 0.05 }
    }
}

impl GeometrySection {
    pub fn build(&self) -> Result<WorldGeometry> {
        let n = Vec3::from(self.normal);
        match self.hull {
            HullKind::Quad => WorldGeometry::quad_hull(n, self.offset, self.arm, self.arm_drop, self.belly),
            HullKind::Point => WorldGeometry::new(n, self.offset, vec![Vec3::zeros()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    pub attitude_stiffness: f64,
    pub position_stiffness: f64,
    pub attitude_damping: [f64; 3],
    pub position_damping: [f64; 3],
    pub attitude_admittance: [f64; 3],
    pub position_admittance: [f64; 3],
    pub energy_split: f64,
    pub admittance_cap: f64,
    /// Box limit on |tau_i| (N m); unset means unlimited.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<[f64; 3]>,
    /// Box limit on |f_i| (N), body frame; unset means unlimited.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force_limit: Option<[f64; 3]>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Dq,
            attitude_stiffness: 1.0,
            position_stiffness: 6.0,
            attitude_damping: [0.14, 0.14, 0.14],
            position_damping: [5.0, 5.0, 5.0],
            attitude_admittance: [0.2, 0.2, 0.2],
            position_admittance: [0.3, 0.3, 0.3],
            energy_split: 0.5,
            admittance_cap: 10.0,
            torque_limit: None,
            force_limit: None,
        }
    }
}

impl ControllerSection {
    pub fn gains(&self) -> Result<ControllerGains> {
        ControllerGains::new(
            self.attitude_stiffness,
            self.position_stiffness,
            DualMatrix::from_diagonals(&Vec3::from(self.attitude_damping), &Vec3::from(self.position_damping)),
            DualMatrix::from_diagonals(&Vec3::from(self.attitude_admittance), &Vec3::from(self.position_admittance)),
            self.energy_split,
            self.admittance_cap,
        )
    }

    /// Saturation box, if either limit is set. The unset half is unlimited.
    pub fn limits(&self) -> Result<Option<WrenchLimits>> {
        if self.torque_limit.is_none() && self.force_limit.is_none() {
            return Ok(None);
        }
        let get = |l: Option<[f64; 3]>| l.map(Vec3::from).unwrap_or_else(|| Vec3::repeat(f64::INFINITY));
        WrenchLimits::new(get(self.torque_limit), get(self.force_limit)).map(Some)
    }
}

/// Explicit baseline gains; when the section is absent the baseline is
/// matched to the dual controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub attitude_stiffness: f64,
    pub position_stiffness: f64,
    pub attitude_damping: [f64; 3],
    pub position_damping: [f64; 3],
}

impl BaselineSection {
    pub fn gains(&self) -> Result<BaselineGains> {
        let all = [self.attitude_stiffness, self.position_stiffness]
            .into_iter()
            .chain(self.attitude_damping)
            .chain(self.position_damping);
        for v in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGains(format!("baseline gains must be positive, got {v}")));
            }
        }
        Ok(BaselineGains {
            attitude_stiffness: self.attitude_stiffness,
            attitude_damping: Vec3::from(self.attitude_damping),
            position_stiffness: self.position_stiffness,
            position_damping: Vec3::from(self.position_damping),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Approach speed at the first contact (m/s).
    pub impact_speed: f64,
    /// Angle between the approach velocity and the surface normal (deg).
    pub incidence_deg: f64,
    /// Initial clearance of the lowest hull point (m).
    pub approach_gap: f64,
    /// Initial roll, pitch, yaw (deg).
    pub attitude_deg: [f64; 3],
    pub trials: usize,
    pub seed: u64,
    /// Half-width of the uniform lateral position jitter (m).
    pub position_jitter: f64,
    /// Half-width of the uniform roll/pitch jitter (deg); yaw is uniform.
    pub attitude_jitter_deg: f64,
    /// Half-width of the uniform incidence-angle jitter (deg).
    pub incidence_jitter_deg: f64,
    /// Impulse model used for the Monte Carlo disturbance.
    pub montecarlo_impulse: ImpulseModel,
    pub settle_threshold: f64,
    pub settle_dwell: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            impact_speed: 2.0,
            incidence_deg: 20.0,
            approach_gap: 0.1,
            attitude_deg: [0.0, 0.0, 0.0],
            trials: 20,
            seed: 2024,
            position_jitter: 0.2,
            attitude_jitter_deg: 20.0,
            incidence_jitter_deg: 15.0,
            montecarlo_impulse: ImpulseModel::Coupled,
            settle_threshold: 0.05,
            settle_dwell: 1.0,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            body: BodySpec { mass: 1.0, inertia: [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.02]], gravity: 9.81 },
            contact: ContactSection::default(),
            geometry: GeometrySection::default(),
            controller: ControllerSection::default(),
            baseline: None,
            sim: SimParams::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// Every configuration key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("body.mass", "vehicle mass (kg)"),
    ("body.inertia", "3x3 inertia about the centre of mass, body frame (kg m^2)"),
    ("body.gravity", "gravity magnitude along +z, z pointing down (m/s^2)"),
    ("contact.restitution", "coefficient of restitution e in [0, 1)"),
    ("contact.friction", "Coulomb friction coefficient mu >= 0"),
    ("contact.impulse", "impulse model for single runs: decoupled | matrix | coupled"),
    ("geometry.normal", "surface normal pointing into free space, world frame"),
    ("geometry.offset", "plane offset d in n.x = d (m)"),
    ("geometry.hull", "hull points: quad (four arm tips plus belly) | point (centre of mass)"),
    ("geometry.arm", "arm-tip half-span along body x and y (m)"),
    ("geometry.arm_drop", "arm-tip offset along body z, positive down (m)"),
    ("geometry.belly", "belly point offset along body z, positive down (m)"),
    ("controller.kind", "controller for single runs: dq | baseline | passive"),
    ("controller.attitude_stiffness", "attitude potential gain k_q"),
    ("controller.position_stiffness", "position potential gain k_p"),
    ("controller.attitude_damping", "diagonal angular damping"),
    ("controller.position_damping", "diagonal linear damping"),
    ("controller.attitude_admittance", "diagonal angular admittance gain (s)"),
    ("controller.position_admittance", "diagonal linear admittance gain (s)"),
    ("controller.energy_split", "share alpha of the energy budget given to the attitude shift, in (0, 1)"),
    ("controller.admittance_cap", "admittance bound used when a twist component vanishes (s)"),
    ("controller.torque_limit", "optional per-axis torque saturation |tau_i| (N m)"),
    ("controller.force_limit", "optional per-axis body force saturation |f_i| (N)"),
    ("baseline.attitude_stiffness", "optional section; baseline attitude gain (default: matched)"),
    ("baseline.position_stiffness", "baseline position gain"),
    ("baseline.attitude_damping", "baseline diagonal angular damping"),
    ("baseline.position_damping", "baseline diagonal linear damping"),
    ("sim.dt", "RK4 step (s)"),
    ("sim.t_end", "episode length (s)"),
    ("sim.hold_time", "time a recovery setpoint is held before returning to hover (s)"),
    ("sim.max_jumps_per_window", "jumps per window before switching to resting contact"),
    ("sim.zeno_window", "jump-counting window (s)"),
    ("sim.blowup", "twist norm treated as divergence"),
    ("sim.event_tolerance", "event localization tolerance on the signed distance (m)"),
    ("sim.max_bisections", "bisection iteration cap"),
    ("experiment.impact_speed", "approach speed (m/s)"),
    ("experiment.incidence_deg", "approach angle from the surface normal (deg)"),
    ("experiment.approach_gap", "initial clearance of the lowest hull point (m)"),
    ("experiment.attitude_deg", "initial roll, pitch, yaw (deg)"),
    ("experiment.trials", "Monte Carlo trial count"),
    ("experiment.seed", "Monte Carlo seed"),
    ("experiment.position_jitter", "lateral position jitter half-width (m)"),
    ("experiment.attitude_jitter_deg", "roll/pitch jitter half-width (deg)"),
    ("experiment.incidence_jitter_deg", "incidence angle jitter half-width (deg)"),
    ("experiment.montecarlo_impulse", "impulse model for Monte Carlo trials: decoupled | matrix | coupled"),
    ("experiment.settle_threshold", "position error counted as settled (m)"),
    ("experiment.settle_dwell", "time the error must stay below the threshold (s)"),
];

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn baseline_gains(&self) -> Result<BaselineGains> {
        match &self.baseline {
            Some(b) => b.gains(),
            None => Ok(BaselineGains::matched(&self.controller.gains()?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::dynamics::BodyParams::try_from(self.body)?;
        self.geometry.build()?;
        self.controller.gains()?;
        self.controller.limits()?;
        self.baseline_gains()?;
        self.sim.validate()?;
        let c = &self.contact;
        crate::impact::ContactSpec::new(Vec3::zeros(), Vec3::z(), c.restitution, c.friction)?;
        let x = &self.experiment;
        if x.trials == 0 {
            return Err(Error::ZeroCount { what: "experiment.trials" });
        }
        let finite_non_negative = [
            ("impact_speed", x.impact_speed),
            ("approach_gap", x.approach_gap),
            ("position_jitter", x.position_jitter),
            ("attitude_jitter_deg", x.attitude_jitter_deg),
            ("incidence_jitter_deg", x.incidence_jitter_deg),
            ("settle_threshold", x.settle_threshold),
            ("settle_dwell", x.settle_dwell),
        ];
        for (name, v) in finite_non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("experiment.{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(x.impact_speed > 0.0) {
            return Err(Error::InvalidConfig("experiment.impact_speed must be positive".into()));
        }
        if !(0.0..90.0).contains(&x.incidence_deg) {
            return Err(Error::InvalidConfig(format!("experiment.incidence_deg must lie in [0, 90), got {}", x.incidence_deg)));
        }
        if !x.attitude_deg.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidConfig("experiment.attitude_deg must be finite".into()));
        }
        Ok(())
    }
}

/// Flattened dotted key paths of a TOML value.
pub fn key_paths(value: &toml::Value) -> Vec<String> {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        if let toml::Value::Table(t) = v {
            for (k, v) in t {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                if v.is_table() {
                    walk(&path, v, out);
                } else {
                    out.push(path);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}
