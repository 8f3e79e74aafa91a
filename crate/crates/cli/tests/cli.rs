use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn helfrich(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helfrich")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn ode_extinction_and_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ode");
    let o = helfrich(&["ode", "--c0", "-1", "--lambda", "0", "--r0", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = read_json(&out.join("summary.json"));
    assert!((f(&s["extinction_time"]) - 0.121860).abs() < 1e-6);
    assert_eq!(f(&s["t_bound"]), 260.0);
    let csv = fs::read_to_string(out.join("ode.csv")).unwrap();
    assert!(csv.starts_with("t,r\n"));

    let o = helfrich(&["ode", "--c0", "1", "--lambda", "0.5", "--r0", "2"]);
    let s = stdout_json(&o);
    assert_eq!(s["terminal"]["kind"], "equilibrium_reached");
    assert!((f(&s["final_radius"]) - 1.0).abs() < 1e-8);

    let o = helfrich(&["ode", "--c0", "2", "--lambda", "0", "--r0", "1", "--horizon", "1"]);
    let s = stdout_json(&o);
    assert_eq!(f(&s["final_radius"]), 1.0);
}

#[test]
fn energy_reports() {
    let o = helfrich(&["energy", "--mesh", "icosphere:5", "--c0", "1", "--lambda", "0.5"]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    let four_pi = 4.0 * std::f64::consts::PI;
    assert!((f(&s["willmore"]) - four_pi).abs() < 0.01 * four_pi);
    assert!((f(&s["penalized"]) - 0.5 * four_pi).abs() < 0.01 * four_pi);
    assert!(f(&s["willmore_bound_residual"]) >= 0.0);

    let s = stdout_json(&helfrich(&["energy", "--mesh", "torus:1:0.35", "--c0", "0", "--lambda", "0"]));
    assert_eq!(s["genus"], 1);
    assert!(f(&s["gauss_bonnet"]["residual"]).abs() < 1e-10);

    let s = stdout_json(&helfrich(&["energy", "--mesh", "tetrahedron"]));
    assert!((f(&s["gauss_bonnet"]["angle_defect_total"]) - four_pi).abs() < 1e-12);
}

#[test]
fn rescale_transforms_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = helfrich(&[
        "rescale", "--mesh", "icosphere:2", "--r", "2", "--c0", "1", "--lambda", "0.5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert_eq!(f(&s["rescaled_params"]["c0"]), 2.0);
    assert_eq!(f(&s["rescaled_params"]["lambda"]), 2.0);
    assert!(f(&s["relative_difference"]) <= 1e-12);
    assert!(out.join("rescaled.off").exists());

    let s = stdout_json(&helfrich(&["rescale", "--mesh", "icosphere:1", "--r", "1", "--c0", "1", "--lambda", "0.5"]));
    assert_eq!(f(&s["relative_difference"]), 0.0);

    assert_eq!(code(&helfrich(&["rescale", "--mesh", "icosphere:1", "--r", "-1", "--c0", "1", "--lambda", "0"])), 11);
}

#[test]
fn error_exit_codes() {
    let o = helfrich(&["flow", "--override", "mesh.path=/definitely/missing.off", "--override", "params.c0=1", "--override", "params.lambda=0"]);
    assert_eq!(code(&o), 10);
    let o = helfrich(&["flow", "--override", "mesh.icosphere_level=1", "--override", "params.c0=1", "--override", "params.lambda=0", "--override", "stepping.bogus=1"]);
    assert_eq!(code(&o), 11);
    assert_eq!(code(&helfrich(&["energy", "--mesh", "/definitely/missing.off"])), 10);
    assert_eq!(code(&helfrich(&["validate", "--suite", "nonsense"])), 11);
    assert_eq!(code(&helfrich(&["no-such-command"])), 11);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("open.off");
    fs::write(&bad, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!(code(&helfrich(&["energy", "--mesh", bad.to_str().unwrap()])), 12);
}

#[test]
fn validate_fast_suites_pass() {
    let o = helfrich(&["validate", "--suite", "identities", "--suite", "ode_oracle", "--fast", "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn validate_fast_shrinker_within_fifteen_percent() {
    let o = helfrich(&["validate", "--suite", "shrinker", "--fast"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert!(text.contains("PASS shrinker/extinction time"));
}

#[test]
fn equilibrium_flow_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eq.toml");
    fs::write(&cfg, "[mesh]\nicosphere_level = 4\nradius = 1.5\n\n[params]\nc0 = 1.0\nlambda = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let o = helfrich(&["flow", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["termination"]["reason"], "converged");
    assert!((f(&s["final"]["mean_radius"]) - 1.0).abs() < 0.02);
    assert_eq!(s["thresholds"]["e0_below_threshold"], true);
    assert!(s["thresholds"].get("t_bound").is_some());
    assert!(!out.join("frames").exists());

    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,dt,area,volume,willmore,w0,helfrich,penalized,mean_curvature_integral,max_asq,gradient_norm,clamp_mass,step_rejections"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 13);
    let mantissa = row[2].split('e').next().unwrap().replace('.', "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn extinction_flow_run_is_singular_and_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = helfrich(&[
        "flow",
        "--override", "mesh.icosphere_level=4",
        "--override", "params.c0=-1",
        "--override", "params.lambda=0",
        "--out", out.to_str().unwrap(),
        "--frames", "on",
        "--quiet",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["termination"]["reason"], "singular_area_collapse");
    assert_eq!(s["classification"]["verdict"], "round_shrinker");
    assert_eq!(s["thresholds"]["final_time_below_t_bound"], true);
    let t = f(&s["termination"]["final_time"]);
    assert!((t - 0.121860).abs() < 0.1 * 0.121860);
    let n = s["frames_written"].as_u64().unwrap();
    assert!(n >= 3);
    assert!(out.join("frames/0000.off").exists() && out.join("frames/0000.meta").exists());
}

#[test]
fn frames_off_writes_no_frames_and_checkpoints_follow_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = helfrich(&[
        "flow",
        "--override", "mesh.icosphere_level=2",
        "--override", "params.c0=-1",
        "--override", "params.lambda=0",
        "--override", "stepping.max_steps=30",
        "--override", "stepping.checkpoint_every=10",
        "--out", out.to_str().unwrap(),
        "--frames", "off",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["termination"]["reason"], "step_budget");
    assert_eq!(s["checkpoints"].as_array().unwrap().len(), 3);
    assert!(out.join("checkpoints/ckpt_000010.meta").exists());
    assert!(!out.join("frames").exists());
}
