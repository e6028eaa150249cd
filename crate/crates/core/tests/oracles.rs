use dqimpact::config::{key_paths, Config, KEYS};
use dqimpact::dualquat::DualVector;
use dqimpact::dynamics::{BodyParams, ClassicState};
use dqimpact::harness::{build_episode, run_monte_carlo, run_scenario, trial_jitter};
use dqimpact::hybridsim::{ControllerKind, ImpulseModel};
use dqimpact::impact::{impulse_dq, impulse_matrix, ContactSpec};
use dqimpact::output::{episode_csv, metrics_csv, EpisodeTable, EPISODE_COLUMNS};
use dqimpact::quat::UnitQuaternion;
use dqimpact::{Mat3, Vec3};

const REFERENCE_CONFIG: &str = include_str!("../../../configs/default.toml");

#[test]
fn head_on_impact_by_hand() {
    // contact straight below the centre of mass: rho = 1/m, <xi, s_n> = -2, Lambda = (1 + e) 2 m
    let body = BodyParams::new(1.0, Mat3::from_diagonal(&Vec3::new(0.01, 0.012, 0.02)), 9.81).unwrap();
    let contact = ContactSpec::new(Vec3::new(0.0, 0.0, -0.1), Vec3::z(), 0.7, 0.0).unwrap();
    let twist = DualVector::new(Vec3::zeros(), Vec3::new(0.0, 0.0, -2.0));
    let dq = impulse_dq(&twist, &contact, &UnitQuaternion::identity(), &body.dual_inertia()).unwrap();
    assert!((dq.inverse_mass - 1.0).abs() < 1e-15);
    assert!((dq.normal_velocity + 2.0).abs() < 1e-15);
    assert!((dq.magnitude - 3.4).abs() < 1e-12);

    let state = ClassicState {
        position: Vec3::zeros(),
        velocity: Vec3::new(0.0, 0.0, -2.0),
        attitude: UnitQuaternion::identity(),
        angular_velocity: Vec3::zeros(),
    };
    let mx = impulse_matrix(&state, &contact, &body).unwrap();
    assert!((mx.inverse_mass - 1.0).abs() < 1e-15);
    assert!((mx.impulse_world - Vec3::new(0.0, 0.0, 3.4)).norm() < 1e-12);
}

#[test]
fn reference_config_matches_defaults() {
    let cfg = Config::from_toml(REFERENCE_CONFIG).unwrap();
    assert_eq!(cfg, Config::default());
}

#[test]
fn reference_config_documents_every_key() {
    let value: toml::Value = toml::from_str(REFERENCE_CONFIG).unwrap();
    let present = key_paths(&value);
    for (key, _) in KEYS {
        // the baseline section ships commented out
        let shown = present.iter().any(|k| k == key) || REFERENCE_CONFIG.contains(&format!("# {}", key.rsplit('.').next().unwrap()));
        assert!(shown, "{key} missing from the reference config");
    }
}

fn tiny_config() -> Config {
    let mut cfg = Config::default();
    cfg.sim.t_end = 0.25;
    cfg.experiment.trials = 3;
    cfg
}

#[test]
fn episode_table_has_one_row_per_sample() {
    let cfg = tiny_config();
    let ep = build_episode(&cfg, ControllerKind::Dq, ImpulseModel::Coupled, None).unwrap();
    let out = run_scenario(&ep, &cfg.experiment).unwrap();
    let csv = episode_csv(&out.log, &ep.body.dual_inertia()).unwrap();
    let table = EpisodeTable::parse(&csv).unwrap();
    assert_eq!(table.rows.len(), out.log.samples.len());
    assert_eq!(table.columns.len() + 1, EPISODE_COLUMNS.len());
    assert!(table.events.iter().any(|e| e == "impact"));
}

#[test]
fn golden_episode() {
    let cfg = tiny_config();
    let jitter = trial_jitter(&cfg.experiment, 7, 0);
    let ep = build_episode(&cfg, ControllerKind::Dq, ImpulseModel::Coupled, Some(&jitter)).unwrap();
    let out = run_scenario(&ep, &cfg.experiment).unwrap();
    let csv = episode_csv(&out.log, &ep.body.dual_inertia()).unwrap();
    let golden = include_str!("golden/tiny_episode.csv");
    assert!(csv == golden, "episode output drifted from tests/golden/tiny_episode.csv");
}

#[test]
fn monte_carlo_is_reproducible() {
    let cfg = tiny_config();
    let run = || run_monte_carlo(&cfg, ControllerKind::Dq, ControllerKind::Baseline, ImpulseModel::Coupled, 3, 99).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(metrics_csv(&a.trials).unwrap(), metrics_csv(&b.trials).unwrap());
    let other = run_monte_carlo(&cfg, ControllerKind::Dq, ControllerKind::Baseline, ImpulseModel::Coupled, 3, 100).unwrap();
    assert_ne!(a.trials, other.trials);
}

#[test]
fn monte_carlo_rejects_zero_trials() {
    let cfg = tiny_config();
    assert!(run_monte_carlo(&cfg, ControllerKind::Dq, ControllerKind::Baseline, ImpulseModel::Coupled, 0, 1).is_err());
}
