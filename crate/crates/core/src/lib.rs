//! Rigid-body impact resolution on dual quaternions, a hybrid collision
//! recovery controller for quadrotors, and the experiment machinery around
//! them.
//!
//! Conventions used throughout:
//! - quaternions are scalar-first `(w, x, y, z)`;
//! - the world `z` axis points down (gravity is `+g e_z`) and the body `z`
//!   axis points down through the belly, so hover thrust acts along `-e_z`;
//! - twists are body-frame `ω + ε v_B`, wrenches body-frame `τ + ε f`.
//!
//! ```
//! use dqimpact::{dualquat::DualVector, dynamics::BodyParams, impact::{impulse_dq, ContactSpec}};
//! use dqimpact::{quat::UnitQuaternion, Vec3};
//!
//! let body = BodyParams::new(1.0, dqimpact::Mat3::identity() * 0.01, 9.81).unwrap();
//! let contact = ContactSpec::new(Vec3::new(0.0, 0.0, 0.05), Vec3::new(0.0, 0.0, -1.0), 0.7, 0.0).unwrap();
//! let twist = DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0));
//! let hit = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
//! assert!((hit.magnitude - 3.4).abs() < 1e-12);
//! ```

// `!(x <= limit)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod controller;
pub mod dualquat;
pub mod dynamics;
pub mod harness;
pub mod hybridsim;
pub mod impact;
pub mod output;
pub mod quat;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("quaternion is not unit (| |q| - 1 | = {deviation:e})")]
    NonUnitQuaternion { deviation: f64 },
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
    #[error("dual quaternion violates the unit constraints (norm {norm_deviation:e}, orthogonality {orthogonality:e})")]
    NonUnitDualQuaternion { norm_deviation: f64, orthogonality: f64 },
    #[error("rotational displacement {angle} rad is outside the principal domain [0, 2π)")]
    DisplacementTooLarge { angle: f64 },
    #[error("direction is not unit (| |u| - 1 | = {deviation:e})")]
    NonUnitDirection { deviation: f64 },
    #[error("invalid body parameters: {0}")]
    InvalidBody(String),
    #[error("invalid contact: {0}")]
    InvalidContact(String),
    #[error("contact is not approaching (normal velocity {normal_velocity:e} m/s); guard logic fired on a separating or resting contact")]
    SeparatingContact { normal_velocity: f64 },
    #[error("coupled impulse denominator {denominator:e} is not positive")]
    CoupledDenominator { denominator: f64 },
    #[error("invalid controller gains: {0}")]
    InvalidGains(String),
    #[error("event is not bracketed (φ before {before:e}, after {after:e})")]
    NotBracketed { before: f64, after: f64 },
    #[error("metric window contains no samples")]
    EmptyWindow,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} must be at least 1")]
    ZeroCount { what: &'static str },
    #[error("impulse formulations disagree on the benchmark inputs (relative deviation {deviation:e})")]
    FormulationMismatch { deviation: f64 },
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
