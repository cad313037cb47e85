//! End-to-end runs of the `ghost-mpm` binary: exit codes and artifacts.

use std::path::Path;
use std::process::Command;

fn ghost_mpm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ghost-mpm")).args(args).output().expect("binary runs")
}

const STRETCH: &str = r#"
scenario = "stretching_body"

[grid]
h = 0.1
nx = 10
ny = 10

[[materials]]
E = 0.0
nu = 0.0
rho0 = 1000.0

[[bodies]]
block = { min = [0.3, 0.3], max = [0.7, 0.7] }
points_per_cell = 2
expansion = { centre = [0.5, 0.5], rate = 1.0 }

[solver]
type = "explicit"
dt = 1e-3
n_steps = 20
mass = "MASS"

[ghost]
enabled = GHOST
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn successful_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", &STRETCH.replace("MASS", "ghost").replace("GHOST", "true"));
    let out = tmp.path().join("out");
    let res = ghost_mpm(&[
        "run",
        &cfg,
        "--output-dir",
        out.to_str().unwrap(),
        "--snapshot-stride",
        "10",
        "--dump-ghost-edges",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["summary.json", "diagnostics.csv", "energy.csv", "ghost_edges.csv", "points_00010.vtk", "points_00020.vtk"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let s = summary(&out);
    assert_eq!(s["steps_completed"], 20);
    assert!(s["divergence_step"].is_null());
    assert!(s["metrics"]["final_max_displacement_error"].as_f64().unwrap() < 1e-10);
    let edges = std::fs::read_to_string(out.join("ghost_edges.csv")).unwrap();
    assert!(edges.lines().count() > 1);
}

#[test]
fn divergence_is_reported_with_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", &STRETCH.replace("MASS", "consistent").replace("GHOST", "false"));
    let out = tmp.path().join("out");
    let res = ghost_mpm(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let s = summary(&out);
    assert!(s["divergence_step"].as_u64().is_some());
    assert!(s["divergence_reason"].is_string());
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(ghost_mpm(&["run", missing.to_str().unwrap()]).status.code(), Some(1));

    let bad = write_config(tmp.path(), "bad.toml", "scenario = \"stretching_body\"\n[grid]\nh = -1\n");
    let res = ghost_mpm(&["run", &bad]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!res.stderr.is_empty());

    let misaligned = STRETCH
        .replace("MASS", "ghost")
        .replace("GHOST", "true")
        .replace("min = [0.3, 0.3]", "min = [0.33, 0.3]");
    let cfg = write_config(tmp.path(), "m.toml", &misaligned);
    let out = tmp.path().join("out");
    assert_eq!(ghost_mpm(&["run", &cfg, "--output-dir", out.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            ghost_mpm::ScenarioConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}
