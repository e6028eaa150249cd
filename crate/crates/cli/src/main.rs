use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dqimpact::bench::{self, Formulation};
use dqimpact::config::{Config, KEYS};
use dqimpact::harness::{self, build_episode, run_scenario, trial_jitter};
use dqimpact::hybridsim::{ControllerKind, ImpulseModel};
use dqimpact::impact::equivalence_suite;
use dqimpact::output::{self, write_atomic, EpisodeTable};

/// Relative deviation above which the equivalence check fails.
const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML, all sections except [baseline] required):\n");
    for (key, doc) in KEYS {
        s.push_str(&format!("  {key:<width$}  {doc}\n"));
    }
    s
}

#[derive(Parser, Debug)]
#[command(name = "dqimpact", version, about = "Rigid-body impact simulation and recovery control", after_help = keys_help())]
struct Cli {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one impact episode and write its log and plots.
    Simulate(SimulateArgs),
    /// Compare the dual-quaternion controller against the baseline over jittered trials.
    Montecarlo(MonteCarloArgs),
    /// Check the dual-quaternion reset map against the matrix reset map on random impacts.
    Equivalence(EquivalenceArgs),
    /// Count operations and time the impulse formulations.
    Bench(BenchArgs),
    /// Render an episode CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Controller override: dq | baseline | passive.
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Impulse model override: decoupled | matrix | coupled.
    #[arg(long)]
    impulse: Option<ImpulseModel>,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    /// Trial count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Impulse model override.
    #[arg(long)]
    impulse: Option<ImpulseModel>,
    /// Candidate controller.
    #[arg(long, default_value = "dq")]
    controller: ControllerKind,
}

#[derive(Args, Debug)]
struct EquivalenceArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Perturb the matrix path's inertia (checks that the gate trips).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "inertial,matrix,dq")]
    formulations: Vec<Formulation>,
    #[arg(long, default_value_t = 1_000_000)]
    iterations: usize,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Episode CSV written by `simulate`.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    write_atomic(path, contents.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    let controller = args.controller.unwrap_or(cfg.controller.kind);
    let impulse = args.impulse.unwrap_or(cfg.contact.impulse);
    // a seed selects a jittered initial condition, as for Monte Carlo trial 0
    let jitter = cli.seed.map(|s| trial_jitter(&cfg.experiment, s, 0));
    let ep = build_episode(&cfg, controller, impulse, jitter.as_ref())?;
    let out = run_scenario(&ep, &cfg.experiment)?;
    let csv = output::episode_csv(&out.log, &ep.body.dual_inertia())?;
    write(&cli.out.join("episode.csv"), &csv)?;
    write(&cli.out.join("jumps.csv"), &output::jumps_csv(&out.log.jumps)?)?;
    write(&cli.out.join("episode.svg"), &output::episode_svg(&EpisodeTable::parse(&csv)?)?)?;

    let m = &out.metrics;
    println!("controller {controller}, impulse model {impulse}");
    println!("jumps            {}", out.log.jumps.len());
    if let Some(t) = out.log.resting_since {
        println!("resting from     {t:.4} s");
    }
    println!("peak L2 error    {:.6} m", m.peak_l2);
    println!("RMS L2 error     {:.6} m", m.rmse_l2);
    println!("peak kinetic     {:.6} J", m.peak_ek);
    match m.settling_time {
        Some(t) => println!("settling time    {t:.3} s"),
        None => println!("settling time    not settled within {:.3} s", m.window),
    }
    if controller == ControllerKind::Dq {
        let audit = harness::audit_lyapunov(&out.log);
        println!("Lyapunov         max flow excess {:.3e} W, jump changes {:?}", audit.max_flow_excess, audit.jump_changes);
    }
    if let Some(reason) = &out.log.failure {
        eprintln!("episode failed: {reason}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn montecarlo(cli: &Cli, args: &MonteCarloArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    let trials = args.trials.unwrap_or(cfg.experiment.trials);
    let seed = cli.seed.unwrap_or(cfg.experiment.seed);
    let impulse = args.impulse.unwrap_or(cfg.experiment.montecarlo_impulse);
    let candidate = args.controller;
    let reference = if candidate == ControllerKind::Baseline { ControllerKind::Dq } else { ControllerKind::Baseline };
    log::info!("{trials} trials, seed {seed}, impulse model {impulse}");
    let report = harness::run_monte_carlo(&cfg, candidate, reference, impulse, trials, seed)?;
    let (c, r) = (candidate.to_string(), reference.to_string());
    write(&cli.out.join("metrics.csv"), &output::metrics_csv(&report.trials)?)?;
    write(&cli.out.join("summary.csv"), &output::summary_csv(&c, &r, &report.summary)?)?;
    write(&cli.out.join("montecarlo.svg"), &output::montecarlo_svg(&report.trials, &c, &r))?;

    println!("{trials} trials, seed {seed}, impulse model {impulse}; failed episodes: {c} {}, {r} {}", report.failed[0], report.failed[1]);
    println!("{:<12} {:>20} {:>20} {:>12}", "metric", c, r, "improvement");
    for s in &report.summary {
        println!(
            "{:<12} {:>11.4} ± {:<6.4} {:>11.4} ± {:<6.4} {:>11.1}%",
            s.name, s.candidate_mean, s.candidate_std, s.reference_mean, s.reference_std, s.improvement_pct
        );
    }
    println!(
        "direction check (all four metrics improve): {}. Magnitudes come from an impulsive contact model and are not comparable to soft-contact simulators.",
        if report.all_improved() { "yes" } else { "no" }
    );
    Ok(ExitCode::SUCCESS)
}

fn equivalence(cli: &Cli, args: &EquivalenceArgs) -> anyhow::Result<ExitCode> {
    let seed = cli.seed.unwrap_or(0);
    let report = equivalence_suite(args.samples, seed, args.inject_fault)?;
    let rows = [
        ("inverse_mass", report.inverse_mass),
        ("magnitude", report.magnitude),
        ("delta_v", report.delta_v),
        ("delta_omega", report.delta_omega),
    ];
    let csv = std::iter::once("quantity,max_relative_deviation\n".to_owned())
        .chain(rows.iter().map(|(k, v)| format!("{k},{}\n", output::fmt_f64(*v))))
        .collect::<String>();
    write(&cli.out.join("equivalence.csv"), &csv)?;
    println!("{} samples, seed {seed}", report.samples);
    for (k, v) in rows {
        println!("{k:<14} {v:.3e}");
    }
    if report.passes(EQUIVALENCE_TOLERANCE) {
        println!("pass (tolerance {EQUIVALENCE_TOLERANCE:e})");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL: deviation {:.3e} exceeds {EQUIVALENCE_TOLERANCE:e}", report.max_deviation());
        Ok(ExitCode::from(3))
    }
}

fn run_bench(cli: &Cli, args: &BenchArgs) -> anyhow::Result<ExitCode> {
    if args.formulations.is_empty() {
        bail!("no formulations selected");
    }
    let seed = cli.seed.unwrap_or(0);
    let rows = bench::run_bench(&args.formulations, args.iterations, seed)?;
    write(&cli.out.join("bench.csv"), &output::bench_csv(&rows)?)?;
    for r in &rows {
        println!(
            "{:<9} {:>3} ops ({:>2} add, {:>2} mul)  median {:>7.2} ns  p95 {:>7.2} ns",
            r.formulation.to_string(),
            r.ops.total,
            r.ops.adds,
            r.ops.muls,
            r.latency.median_ns,
            r.latency.p95_ns
        );
        if cli.verbose {
            for (label, ops) in bench::flop_breakdown(r.formulation) {
                println!("    {label:<22} {ops}");
            }
        }
    }
    let find = |f| rows.iter().find(|r| r.formulation == f);
    if let (Some(m), Some(d)) = (find(Formulation::Matrix), find(Formulation::Dq)) {
        println!(
            "dq/matrix: operations {:.3}, median latency {:.3}",
            d.ops.total as f64 / m.ops.total as f64,
            d.latency.median_ns / m.latency.median_ns
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn plot(cli: &Cli, args: &PlotArgs) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let table = EpisodeTable::parse(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("episode");
    write(&cli.out.join(format!("{stem}.svg")), &output::episode_svg(&table)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Montecarlo(a) => montecarlo(cli, a),
        Command::Equivalence(a) => equivalence(cli, a),
        Command::Bench(a) => run_bench(cli, a),
        Command::Plot(a) => plot(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
