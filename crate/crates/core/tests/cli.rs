use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiclassical")).args(args).output().expect("spawn")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
name = "small"
kind = "statistical"
units = "natural"
seed = 11

[grid]
dim = 1
extent = [32.0]
points = [256]

[potential]
kind = "free"
mass = 1.0

[initial]
center = [0.0]
sigma = [1.0]
velocity = [0.0]

[hbar]
base = 0.5
divisors = [1, 10, 100]

[solver]
t_final = 0.5
output_interval = 0.1

[particles]
count = 10
density_samples = 2000
"#;

#[test]
fn shipped_scenarios_validate() {
    for name in ["free_packet.cfg", "coherent.cfg", "double_slit.cfg", "harmonic_beam.cfg"] {
        let out = cli(&["validate", scenario(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("divisor"));
    }
}

#[test]
fn unknown_key_exits_2_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.cfg", &SMALL.replace("sigma =", "sigam ="));
    let out = cli(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigam") && err.contains("sigma"), "{err}");
}

#[test]
fn missing_potential_kind_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.cfg", &SMALL.replace("kind = \"free\"\n", ""));
    let out = cli(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));
}

#[test]
fn under_resolved_rung_exits_2_and_names_points() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.cfg", &SMALL.replace("velocity = [0.0]", "velocity = [2.0]").replace("divisors = [1, 10, 100]", "divisors = [1, 10000]"));
    let out = cli(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("under-resolved") && err.contains("need at least"), "{err}");
}

#[test]
fn bad_override_exits_2() {
    let out = cli(&["validate", scenario("free_packet.cfg").to_str().unwrap(), "--set", "solver.t_fnal=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_final"));
}

#[test]
fn missing_file_exits_2() {
    let out = cli(&["validate", "/nonexistent.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_run_directory_and_override_restricts_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.cfg", SMALL);
    let run_dir = dir.path().join("run");
    let out = cli(&["run", &p, "--out", run_dir.to_str().unwrap(), "--set", "hbar_divisors=10,100", "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scenario.echo", "metrics.json", "trajectories.csv", "manifest.json", "fields/rung0_final.csv", "fields/rung1_final.csv"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir.join("metrics.json")).unwrap()).unwrap();
    let divisors: Vec<f64> = metrics["rungs"].as_array().unwrap().iter().map(|r| r["divisor"].as_f64().unwrap()).collect();
    assert_eq!(divisors, vec![10.0, 100.0]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["timings"].as_array().unwrap().len(), 2);
    let echo = std::fs::read_to_string(run_dir.join("scenario.echo")).unwrap();
    assert!(echo.contains("divisors = [10.0, 100.0]") || echo.contains("divisors = [\n"), "{echo}");
    let csv = std::fs::read_to_string(run_dir.join("trajectories.csv")).unwrap();
    assert!(csv.starts_with("rung,divisor,hbar,ensemble,particle,step,time,x,y,vx,vy,absorbed"));
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.cfg", SMALL);
    let out = cli(&["validate", &p, "--seed", "99"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 99"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(&["run", "x.cfg"]).status.code(), Some(2));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn in_process_entry_point_matches_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = semiclassical::cli::run(["semiclassical", "validate", scenario("free_packet.cfg").to_str().unwrap()], &mut out, &mut err);
    assert_eq!(code, semiclassical::cli::EXIT_OK);
    assert!(String::from_utf8_lossy(&out).contains("free_packet"));
}
