use std::path::Path;
use std::process::{Command, Output};

use dqimpact::config::KEYS;

fn dqimpact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqimpact")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn help_documents_every_config_key() {
    let out = dqimpact(&["--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for (key, _) in KEYS {
        assert!(help.contains(key), "--help does not mention {key}");
    }
    for sub in ["simulate", "montecarlo", "equivalence", "bench", "plot"] {
        assert!(help.contains(sub));
    }
    assert!(!help.contains("inject-fault"));
}

#[test]
fn simulate_writes_log_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqimpact(&["simulate", "--out", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("controller dq"));
    for f in ["episode.csv", "jumps.csv", "episode.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("episode.csv")).unwrap();
    assert!(csv.starts_with("t,j,px,py,pz,qw,qx,qy,qz,wx,wy,wz,vbx,vby,vbz,V,Vpos,Vkin,Ek,event\n"));
    // 8 s at 1 ms plus the event samples
    assert!(csv.lines().count() > 8000);
}

#[test]
fn controller_flag_switches_controller() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqimpact(&["simulate", "--controller", "baseline", "--out", &out_arg(dir.path())]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("controller baseline"));
    assert!(!dqimpact(&["simulate", "--controller", "lqr", "--out", &out_arg(dir.path())]).status.success());
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let reference = include_str!("../../../configs/default.toml");
    std::fs::write(&path, reference.replace("friction = 0.3", "friction = 0.3\nfricton = 0.2")).unwrap();
    let out = dqimpact(&["simulate", "--config", path.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 16") && err.contains("fricton"), "{err}");
    assert!(!dir.path().join("episode.csv").exists());
}

#[test]
fn missing_section_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.toml");
    std::fs::write(&path, "[body]\nmass = 1.0\ninertia = [[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.02]]\ngravity = 9.81\n").unwrap();
    let out = dqimpact(&["simulate", "--config", path.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("missing field"));
}

#[test]
fn reference_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqimpact(&["montecarlo", "--config", "../../configs/default.toml", "--trials", "2", "--out", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("direction check"));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "trial,controller,peak_l2_m,rmse_l2_m,peak_ek_J,settling_s,failed");
    assert_eq!(metrics.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("summary.csv").exists() && dir.path().join("montecarlo.svg").exists());
}

#[test]
fn equivalence_gate() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    let pass = dqimpact(&["equivalence", "--samples", "500", "--out", &o]);
    assert!(pass.status.success());
    assert!(String::from_utf8(pass.stdout).unwrap().contains("pass"));
    let fault = dqimpact(&["equivalence", "--samples", "500", "--inject-fault", "--out", &o]);
    assert!(!fault.status.success());
    assert!(String::from_utf8(fault.stdout).unwrap().contains("FAIL"));
    assert!(!dqimpact(&["equivalence", "--samples", "0", "--out", &o]).status.success());
}

#[test]
fn bench_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqimpact(&["bench", "--iterations", "3000", "--formulations", "matrix,dq", "--out", &out_arg(dir.path())]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "formulation,adds,muls,total,median_ns,p95_ns,checksum");
    assert!(lines[1].starts_with("matrix,27,42,69,") && lines[2].starts_with("dq,20,33,53,"));
    assert!(!dqimpact(&["bench", "--iterations", "0", "--out", &out_arg(dir.path())]).status.success());
}

#[test]
fn plot_renders_episode_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    assert!(dqimpact(&["simulate", "--controller", "passive", "--out", &o]).status.success());
    let csv = dir.path().join("episode.csv");
    let plots = dir.path().join("plots");
    assert!(dqimpact(&["plot", "--input", csv.to_str().unwrap(), "--out", plots.to_str().unwrap()]).status.success());
    let svg = std::fs::read_to_string(plots.join("episode.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b\n1,2\n").unwrap();
    assert!(!dqimpact(&["plot", "--input", junk.to_str().unwrap(), "--out", &o]).status.success());
}

#[test]
fn saturation_limits_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let reference = include_str!("../../../configs/default.toml");
    let run = |name: &str, text: String| {
        let path = dir.path().join(format!("{name}.toml"));
        std::fs::write(&path, text).unwrap();
        let out_dir = dir.path().join(name);
        let out = dqimpact(&["simulate", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        (out, out_dir.join("episode.csv"))
    };
    let (free, free_csv) = run("free", reference.to_owned());
    assert!(free.status.success());
    let (capped, capped_csv) = run("capped", reference.replace("# torque_limit = ", "torque_limit = ").replace("# force_limit = ", "force_limit = "));
    assert!(capped.status.success(), "{}", String::from_utf8_lossy(&capped.stderr));
    assert_ne!(std::fs::read(free_csv).unwrap(), std::fs::read(capped_csv).unwrap());
    let (bad, _) = run("bad", reference.replace("# torque_limit = [0.5", "torque_limit = [-0.5"));
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().contains("wrench limits"));
}
