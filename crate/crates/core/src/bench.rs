//! Operation counts and latency of the impulse-magnitude kernels.
//!
//! Counts come from running the same generic kernels used by the reset maps
//! with [`Counted`] in place of `f64`. Additions and subtractions count as
//! adds, multiplications and divisions as muls, negation is free.

use std::cell::Cell;
use std::fmt;
use std::hint::black_box;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::impact::{self, arr, random_impact, rows, Arith, M3, V3};
use crate::{Error, Result};

thread_local! {
    static ADDS: Cell<u64> = const { Cell::new(0) };
    static MULS: Cell<u64> = const { Cell::new(0) };
}

/// Scalar that tallies the arithmetic performed on it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Counted(pub f64);

impl Add for Counted {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        ADDS.with(|c| c.set(c.get() + 1));
        Counted(self.0 + rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Sub for Counted {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        ADDS.with(|c| c.set(c.get() + 1));
        Counted(self.0 - rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Counted {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        MULS.with(|c| c.set(c.get() + 1));
        Counted(self.0 * rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for Counted {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        MULS.with(|c| c.set(c.get() + 1));
        Counted(self.0 / rhs.0)
    }
}

impl Neg for Counted {
    type Output = Self;
    fn neg(self) -> Self {
        Counted(-self.0)
    }
}

impl Arith for Counted {
    fn lift(value: f64) -> Self {
        Counted(value)
    }
}

/// Unit-weight operation tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
    pub total: u64,
}

impl OpCount {
    pub fn new(adds: u64, muls: u64) -> Self {
        OpCount { adds, muls, total: adds + muls }
    }
}

impl Add for OpCount {
    type Output = OpCount;
    fn add(self, rhs: OpCount) -> OpCount {
        OpCount::new(self.adds + rhs.adds, self.muls + rhs.muls)
    }
}

impl fmt::Display for OpCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} add, {} mul)", self.total, self.adds, self.muls)
    }
}

/// Runs `f` and returns its result with the operations it performed.
pub fn count<R>(f: impl FnOnce() -> R) -> (R, OpCount) {
    let before = (ADDS.with(Cell::get), MULS.with(Cell::get));
    let out = f();
    let after = (ADDS.with(Cell::get), MULS.with(Cell::get));
    (out, OpCount::new(after.0 - before.0, after.1 - before.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Inertial,
    Matrix,
    Dq,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::Inertial, Formulation::Matrix, Formulation::Dq];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Inertial => "inertial",
            Formulation::Matrix => "matrix",
            Formulation::Dq => "dq",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown formulation `{s}` (expected inertial, matrix or dq)")))
    }
}

/// Inputs to one impulse evaluation, in the layout each kernel expects.
#[derive(Debug, Clone, Copy)]
pub struct KernelInput {
    pub rot: M3<f64>,
    pub inertia_inv: M3<f64>,
    pub inv_mass: f64,
    pub r: V3<f64>,
    pub n: V3<f64>,
    pub velocity: V3<f64>,
    pub body_velocity: V3<f64>,
    pub angular_velocity: V3<f64>,
    pub restitution: f64,
}

impl KernelInput {
    pub fn from_sample(sample: &impact::ImpactSample) -> Self {
        let rot = sample.state.attitude.to_rotation_matrix();
        KernelInput {
            rot: rows(&rot),
            inertia_inv: rows(sample.body.inertia_inv()),
            inv_mass: 1.0 / sample.body.mass(),
            r: arr(&sample.contact.contact_point),
            n: arr(&sample.contact.normal),
            velocity: arr(&sample.state.velocity),
            body_velocity: arr(&(rot.transpose() * sample.state.velocity)),
            angular_velocity: arr(&sample.state.angular_velocity),
            restitution: sample.contact.restitution,
        }
    }

    fn lifted(&self) -> CountedInput {
        let v = |a: &V3<f64>| a.map(Counted);
        let m = |a: &M3<f64>| a.map(|row| row.map(Counted));
        CountedInput {
            rot: m(&self.rot),
            inertia_inv: m(&self.inertia_inv),
            inv_mass: Counted(self.inv_mass),
            r: v(&self.r),
            n: v(&self.n),
            velocity: v(&self.velocity),
            body_velocity: v(&self.body_velocity),
            angular_velocity: v(&self.angular_velocity),
            restitution: Counted(self.restitution),
        }
    }
}

struct CountedInput {
    rot: M3<Counted>,
    inertia_inv: M3<Counted>,
    inv_mass: Counted,
    r: V3<Counted>,
    n: V3<Counted>,
    velocity: V3<Counted>,
    body_velocity: V3<Counted>,
    angular_velocity: V3<Counted>,
    restitution: Counted,
}

/// Deterministic stream of valid benchmark inputs.
pub fn benchmark_inputs(count: usize, seed: u64) -> Vec<KernelInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| KernelInput::from_sample(&random_impact(&mut rng, 0.0))).collect()
}

/// Impulse magnitude `Λ` on the given formulation.
#[inline(always)]
pub fn impulse_magnitude(formulation: Formulation, x: &KernelInput) -> f64 {
    match formulation {
        Formulation::Inertial => impact::inertial_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.velocity,
            &x.angular_velocity,
            x.restitution,
        ),
        Formulation::Matrix => impact::matrix_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.velocity,
            &x.angular_velocity,
            x.restitution,
        ),
        Formulation::Dq => impact::dq_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.angular_velocity,
            &x.body_velocity,
            x.restitution,
        ),
    }
    .magnitude
}

fn probe_input() -> KernelInput {
    benchmark_inputs(1, 0)[0]
}

/// Operations in the effective inverse mass `ρ` for one formulation.
pub fn flop_count(formulation: Formulation) -> OpCount {
    let x = probe_input().lifted();
    let (_, ops) = count(|| match formulation {
        Formulation::Inertial => impact::inertial_inverse_mass(&x.rot, &x.inertia_inv, x.inv_mass, &x.r, &x.n),
        Formulation::Matrix => impact::matrix_inverse_mass(&x.rot, &x.inertia_inv, x.inv_mass, &x.r, &x.n),
        Formulation::Dq => impact::dq_inverse_mass(&x.rot, &x.inertia_inv, x.inv_mass, &x.r, &x.n),
    });
    ops
}

/// Operations in the full impulse magnitude `Λ`, including the contact
/// velocity and the final quotient.
pub fn impulse_flop_count(formulation: Formulation) -> OpCount {
    counted_impulse(formulation, &probe_input())
}

fn counted_impulse(formulation: Formulation, input: &KernelInput) -> OpCount {
    let x = input.lifted();
    let (_, ops) = count(|| match formulation {
        Formulation::Inertial => impact::inertial_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.velocity,
            &x.angular_velocity,
            x.restitution,
        ),
        Formulation::Matrix => impact::matrix_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.velocity,
            &x.angular_velocity,
            x.restitution,
        ),
        Formulation::Dq => impact::dq_impulse_kernel(
            &x.rot,
            &x.inertia_inv,
            x.inv_mass,
            &x.r,
            &x.n,
            &x.angular_velocity,
            &x.body_velocity,
            x.restitution,
        ),
    });
    ops
}

/// Per-sub-expression breakdown of [`flop_count`]. Terms are evaluated one
/// at a time through the same helpers the kernels use, so they sum to the
/// kernel total.
pub fn flop_breakdown(formulation: Formulation) -> Vec<(&'static str, OpCount)> {
    use impact::{cross, dot, mat_mul, mat_t_vec, mat_vec, scale, transpose};
    let x = probe_input().lifted();
    let mut items = Vec::new();
    let mut step = |label: &'static str, ops: OpCount| items.push((label, ops));
    match formulation {
        Formulation::Matrix => {
            let (n_body, c) = count(|| mat_t_vec(&x.rot, &x.n));
            step("R^T n", c);
            let (moment, c) = count(|| cross(&x.r, &n_body));
            step("r x n_B", c);
            let (ang, c) = count(|| mat_vec(&x.inertia_inv, &moment));
            step("J^-1 (r x n_B)", c);
            let (lever, c) = count(|| cross(&ang, &x.r));
            step("(..) x r", c);
            let (world, c) = count(|| mat_vec(&x.rot, &lever));
            step("R (..)", c);
            let (proj, c) = count(|| dot(&x.n, &world));
            step("n . (..)", c);
            let (_, c) = count(|| x.inv_mass + proj);
            step("m^-1 + (..)", c);
        }
        Formulation::Dq => {
            let (n_body, c) = count(|| mat_t_vec(&x.rot, &x.n));
            step("R^T n", c);
            let (moment, c) = count(|| cross(&x.r, &n_body));
            step("r x n_B", c);
            let (ang, c) = count(|| mat_vec(&x.inertia_inv, &moment));
            step("J^-1 (r x n_B)", c);
            let (lin, c) = count(|| scale(x.inv_mass, &n_body));
            step("m^-1 n_B", c);
            let (_, c) = count(|| dot(&ang, &moment) + dot(&lin, &n_body));
            step("<M^-1 s, s>", c);
        }
        Formulation::Inertial => {
            let (rj, c) = count(|| mat_mul(&x.rot, &x.inertia_inv));
            step("R J^-1", c);
            let (world_inv, c) = count(|| mat_mul(&rj, &transpose(&x.rot)));
            step("(R J^-1) R^T", c);
            let (r_world, c) = count(|| mat_vec(&x.rot, &x.r));
            step("R r", c);
            let (moment, c) = count(|| cross(&r_world, &x.n));
            step("r_W x n", c);
            let (lever, c) = count(|| cross(&mat_vec(&world_inv, &moment), &r_world));
            step("(J_W^-1 (..)) x r_W", c);
            let (proj, c) = count(|| dot(&x.n, &lever));
            step("n . (..)", c);
            let (_, c) = count(|| x.inv_mass + proj);
            step("m^-1 + (..)", c);
        }
    }
    items
}

/// Largest relative disagreement of `Λ` between the formulations.
pub fn formulation_agreement(inputs: &[KernelInput]) -> f64 {
    inputs
        .iter()
        .map(|x| {
            let reference = impulse_magnitude(Formulation::Matrix, x);
            Formulation::ALL
                .iter()
                .map(|&f| (impulse_magnitude(f, x) - reference).abs() / reference.abs().max(1e-12))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Relative tolerance of the correctness gate run before timing.
pub const AGREEMENT_TOLERANCE: f64 = 1e-10;

/// Evaluations timed together; one latency sample per batch.
pub const BATCH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub formulation: Formulation,
    pub iterations: usize,
    pub median_ns: f64,
    pub p95_ns: f64,
    pub checksum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub formulation: Formulation,
    pub ops: OpCount,
    pub latency: LatencyStats,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Times each formulation over `n_iters` evaluations (rounded up to whole
/// batches). Batches of the formulations are interleaved so drift in clock
/// speed affects them equally.
pub fn latency_bench(formulations: &[Formulation], n_iters: usize, seed: u64) -> Result<Vec<LatencyStats>> {
    if n_iters == 0 {
        return Err(Error::ZeroCount { what: "iterations" });
    }
    if formulations.is_empty() {
        return Err(Error::ZeroCount { what: "formulations" });
    }
    let inputs = benchmark_inputs(BATCH, seed);
    let deviation = formulation_agreement(&inputs);
    if !(deviation <= AGREEMENT_TOLERANCE) {
        return Err(Error::FormulationMismatch { deviation });
    }
    let batches = n_iters.div_ceil(BATCH);
    let mut samples = vec![Vec::with_capacity(batches); formulations.len()];
    let mut checksums = vec![0.0; formulations.len()];

    // warm up caches and branch predictors
    for &f in formulations {
        for x in &inputs {
            black_box(impulse_magnitude(f, black_box(x)));
        }
    }
    for _ in 0..batches {
        for (k, &f) in formulations.iter().enumerate() {
            let start = Instant::now();
            let mut acc = 0.0;
            for x in &inputs {
                acc += impulse_magnitude(f, black_box(x));
            }
            let elapsed = start.elapsed();
            checksums[k] += black_box(acc);
            samples[k].push(elapsed.as_nanos() as f64 / BATCH as f64);
        }
    }
    Ok(formulations
        .iter()
        .zip(samples)
        .zip(checksums)
        .map(|((&formulation, mut s), checksum)| {
            s.sort_by(f64::total_cmp);
            LatencyStats {
                formulation,
                iterations: batches * BATCH,
                median_ns: percentile(&s, 0.5),
                p95_ns: percentile(&s, 0.95),
                checksum,
            }
        })
        .collect())
}

/// Counts plus timings, one row per formulation.
pub fn run_bench(formulations: &[Formulation], n_iters: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let stats = latency_bench(formulations, n_iters, seed)?;
    Ok(stats.into_iter().map(|latency| BenchRow { formulation: latency.formulation, ops: flop_count(latency.formulation), latency }).collect())
}
