use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ncq(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NCQ_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const EXACT_ENERGY: &[&str] = &[
    "--set",
    "kernel.family=exact",
    "--set",
    "observable.kind=energy",
    "--set",
    "observable.stencil=analytic",
];

#[test]
fn systems_lists_catalog_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["systems"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("harmonic_oscillator_1d"));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["subcommand"], "systems");
    assert!(m["outputs"]["systems.json"].is_string());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn exact_pinned_oscillator_energy_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["expect"];
    args.extend_from_slice(EXACT_ENERGY);
    let o = ncq(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("expectation.json"));
    assert_eq!(r["estimate"].as_f64(), Some(2.0));
    assert_eq!(r["std_error"].as_f64(), Some(0.0));
    assert_eq!(r["stencil"], "analytic");
}

#[test]
fn fejer_node_scan_reports_nodes_at_pi() {
    let dir = tempfile::tempdir().unwrap();
    // x_s(π/4) = cos(π/2) = 0 for the default pin.
    let o = ncq(
        dir.path(),
        &["node-scan", "--set", "kernel.family=fejer", "--set", "grid.t_end=1.5707963267948966", "--set", "grid.n_slices=3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("node_scan.csv")).unwrap();
    let minima: Vec<f64> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(2).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()))
        .collect();
    let cell = 8.0 * std::f64::consts::PI / 2000.0;
    for k in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
        let target = k * std::f64::consts::PI;
        assert!(minima.iter().any(|x| (x - target).abs() <= cell), "{k}: {minima:?}");
    }
}

#[test]
fn untruncated_fejer_second_moment_is_a_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["expect", "--set", "kernel.family=fejer"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverg"));
    let o = ncq(dir.path(), &["limit-sweep", "--set", "kernel.family=fejer"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["expect", "--set", "kernel.family=lorentz"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel.family"));
    let o = ncq(dir.path(), &["expect", "--set", "sampler.n_sample=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_sample"));
}

#[test]
fn battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["battery"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&dir.path().join("battery.json"));
    assert_eq!(r["passed"], true);
    assert!(fs::read_to_string(dir.path().join("battery.csv")).unwrap().starts_with("id,expected,observed"));
}

#[test]
fn samples_reproduce_from_their_own_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = ncq(a.path(), &["sample", "--set", "sampler.n_samples=50", "--set", "sampler.seed=11"]);
    assert_eq!(o.status.code(), Some(0));
    let resolved = a.path().join("config.toml");
    let o = ncq(b.path(), &["sample", "--config", resolved.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let first = fs::read(a.path().join("samples.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("samples.csv")).unwrap());
    assert_eq!(
        fs::read(a.path().join("config.toml")).unwrap(),
        fs::read(b.path().join("config.toml")).unwrap()
    );
    let (ma, mb) = (json(&a.path().join("manifest.json")), json(&b.path().join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_digest"], mb["config_digest"]);
}

#[test]
fn binary_samples_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["sample", "--format", "binary", "--set", "sampler.n_samples=20"]);
    assert_eq!(o.status.code(), Some(0));
    let bytes = fs::read(dir.path().join("samples.ncqb")).unwrap();
    let (header, xs, ws) = ncq::export::read_samples_binary(bytes.as_slice()).unwrap();
    assert_eq!(header.n_samples, 20);
    assert_eq!(header.grid.n_slices(), 11);
    assert_eq!(xs.len(), 20);
    assert_eq!(ws, vec![1.0; 20]);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ncq"))
        .arg("systems")
        .env("NCQ_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn limit_sweep_and_grid_study_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(dir.path(), &["limit-sweep", "--set", "sampler.n_samples=2000", "--set", "sweep.m_values=[1, 2, 4]"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    let o = ncq(
        dir.path(),
        &["grid-study", "--set", "sampler.n_samples=2000", "--set", "study.slice_counts=[3, 11]", "--set", "observable.time=0.5"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&dir.path().join("grid_study.json"));
    assert_eq!(g["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_check_on_configured_density() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncq(
        dir.path(),
        &[
            "oracle-check",
            "--set", "oracle.builtin=false",
            "--set", "grid.n_slices=3",
            "--set", "lattice.points=25",
            "--set", "oracle.ancestral_samples=4000",
            "--set", "oracle.metropolis_samples=4000",
            "--set", "observable.t_index=1",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("oracle.json"));
    let row = &r[0];
    for key in ["case_id", "mc_estimate", "mc_stderr", "lattice_value", "quadrature_value", "verdict"] {
        assert!(row.get(key).is_some());
    }
}
