use std::path::Path;
use std::process::Command;

use parasqueeze_runner::manifest::Manifest;
use parasqueeze_runner::pipeline::*;
use parasqueeze_runner::ExperimentConfig;

const SMALL: &[&str] = &[
    "system.n_atoms=20",
    "amplification.duration=2",
    "amplification.husimi_times=[0, 1]",
    "amplification.husimi_theta_points=9",
    "amplification.husimi_phi_points=17",
    "trapping.t0=1",
    "trapping.duration=0.5",
    "trapping.max_iters=5",
    "trapping.hold=0.2",
    "trapping.two_parameter_evals=6",
    "linesearch.t0_min=1",
    "linesearch.t0_max=2",
    "linesearch.points=3",
    "resonance.n_atoms=10",
    "resonance.duration=10",
    "resonance.points=3",
];

fn run(verb: &str, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_parasqueeze"));
    cmd.arg(verb).arg("--out").arg(out).env("RUST_LOG", "warn");
    for s in SMALL.iter().chain(extra) {
        cmd.arg("--set").arg(s);
    }
    let o = cmd.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn small_config() -> ExperimentConfig {
    let o: Vec<String> = SMALL.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml_with_overrides("", &o).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("calibrate", &dir.path().join("a"), &[]).0, 0);
    assert_eq!(run("calibrate", &dir.path().join("b"), &["system.nope=1"]).0, 2);
    assert_eq!(run("amplify", &dir.path().join("c"), &["amplification.duration=-2"]).0, 2);
    let (code, err) = run("calibrate", &dir.path().join("d"), &["system.n_atoms=4", "system.target_xi_s=0.001"]);
    assert_eq!(code, 3, "{err}");
    let (code, err) = run(
        "trap",
        &dir.path().join("e"),
        &["trapping.initial_step=1e300", "trapping.two_parameter=false"],
    );
    assert_eq!(code, 4, "{err}");
    assert!(Manifest::read(&dir.path().join("e")).unwrap().stalled);

    let missing = Command::new(env!("CARGO_BIN_EXE_parasqueeze"))
        .args(["calibrate", "--config", "/nonexistent/cfg.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn manifest_hash_matches_written_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run("calibrate", &out, &["seed=17"]).0, 0);
    let cfg = ExperimentConfig::load(&out.join("config.toml"), &[]).unwrap();
    assert_eq!(cfg.seed, 17);
    let m = Manifest::read(&out).unwrap();
    assert!(m.matches(&cfg));
    assert!(m.files.contains_key("calibration.json"));
    assert!(m.files.contains_key("config.toml"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    let mut cfg = small_config();
    cfg.seed = 3;
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_parasqueeze"))
        .args(["calibrate", "--seed", "9", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let written = ExperimentConfig::load(&out.join("config.toml"), &[]).unwrap();
    assert_eq!(written.seed, 9);
    assert_eq!(written.system.n_atoms, 20);
    assert_eq!(written.output_dir, out);
}

#[test]
fn identical_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ["trapping.perturbation=0.01", "seed=5"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("full-pipeline", &a, &extra).0, 0);
    assert_eq!(run("full-pipeline", &b, &extra).0, 0);
    let ma = Manifest::read(&a).unwrap();
    let mb = Manifest::read(&b).unwrap();
    // output_dir differs, so compare everything except the config itself
    let strip = |m: &Manifest| {
        let mut f = m.files.clone();
        f.remove("config.toml");
        f
    };
    assert_eq!(strip(&ma), strip(&mb));
    assert_eq!(ma.summary, mb.summary);
    for f in strip(&ma).keys() {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert_eq!(run("trap", &c, &["trapping.perturbation=0.01", "seed=6"]).0, 0);
    let ramp_a = std::fs::read(a.join("trap/gamma_0/oct_trace.csv")).unwrap();
    let ramp_c = std::fs::read(c.join("gamma_0/oct_trace.csv")).unwrap();
    assert_ne!(ramp_a, ramp_c);
}

#[test]
fn zero_amplitude_keeps_ground_state() {
    let mut cfg = small_config();
    cfg.system.n_atoms = 40;
    let cal = run_calibration(&cfg, 40).unwrap();
    let amp = run_amplification(&cfg, &cal, 0.0, &[]).unwrap();
    for r in &amp.reports {
        assert!((r.xi_s - cfg.system.target_xi_s).abs() < 1e-8, "{}", r.xi_s);
    }
}

#[test]
fn zero_amplitude_resonance_is_flat() {
    let mut cfg = small_config();
    cfg.resonance.amplitude = 0.0;
    cfg.resonance.duration = 30.0;
    let res = run_resonance(&cfg).unwrap();
    for p in &res.points {
        assert!(p.rate.unwrap().abs() < 1e-8, "{:?}", p);
    }
}

#[test]
fn linesearch_table_has_one_row_per_point() {
    let cfg = small_config();
    let cal = run_calibration(&cfg, cfg.system.n_atoms).unwrap();
    let amp = run_amplification(&cfg, &cal, 0.05, &linesearch_times(&cfg)).unwrap();
    let ls = run_linesearch(&cfg, &cal, &amp).unwrap();
    assert_eq!(ls.rows.len(), 3);
    let best = ls.rows.iter().map(|r| r.xi_s).fold(f64::INFINITY, f64::min);
    assert_eq!(best, ls.best_xi_s);

    let mut single = cfg.clone();
    single.linesearch.t0_max = single.linesearch.t0_min;
    let amp = run_amplification(&single, &cal, 0.05, &linesearch_times(&single)).unwrap();
    let ls = run_linesearch(&single, &cal, &amp).unwrap();
    assert_eq!(ls.rows.len(), 1);
    assert_eq!(ls.best_t0, single.linesearch.t0_min);
}

#[test]
fn hold_freezes_squeezing_after_decoupling() {
    let mut cfg = small_config();
    cfg.system.n_atoms = 100;
    cfg.amplification.duration = 10.0;
    cfg.trapping.t0 = 10.0;
    cfg.trapping.duration = 2.0;
    cfg.trapping.hold = 2.0;
    cfg.trapping.gammas = vec![0.0];
    cfg.trapping.max_iters = 10;
    cfg.trapping.two_parameter = false;
    let cal = run_calibration(&cfg, 100).unwrap();
    let amp = run_amplification(&cfg, &cal, 0.05, &[10.0]).unwrap();
    let c = amp.state_at(10.0).unwrap();
    let trap = run_trapping(&cfg, &cal, &c.state, 10.0, c.lambda).unwrap();
    let r = &trap.runs[0];
    assert!(r.omega_ratio < cfg.tolerances.hold_decoupling);
    assert!(r.hold_variation < cfg.tolerances.hold_variation, "{}", r.hold_variation);
    assert!(r.optimized_final.xi_s < trap.initial.xi_s);
    assert!(r.trace.is_monotone());
    assert!(r.robertson_min >= -cfg.tolerances.robertson);
}
