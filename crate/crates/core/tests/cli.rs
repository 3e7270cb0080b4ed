use std::fs;
use std::path::Path;
use std::process::Command;

use mpdsa::output::{verify_manifest, RunManifest};
use serde_json::Value;

fn mpdsa(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_mpdsa"))
        .args(args)
        .current_dir(dir)
        .env_remove("MPDSA_OUT")
        .status()
        .expect("binary runs")
        .code()
        .expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const PATH3: &str = r#"{
  "schema_version": 1,
  "geometry": {"kind": "lattice", "dim": 1},
  "n_particles": 1,
  "g": 0.0,
  "trials": 2,
  "experiments": [{"kind": "spectrum", "center": [[0]], "radius": 1}]
}"#;

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn path_spectrum_and_rerun_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "c.json", PATH3);
    assert_eq!(mpdsa(&["spectrum", "--config", "c.json", "--out", "a"], d), 0);
    let text = fs::read_to_string(d.join("a/spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,seed,index,eigenvalue"));
    let ev: Vec<f64> = lines.take(3).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    for (x, want) in ev.iter().zip([0.0, 1.0, 3.0]) {
        assert!((x - want).abs() < 1e-12, "{ev:?}");
    }
    assert!(verify_manifest(&d.join("a")).unwrap().is_empty());
    assert_eq!(mpdsa(&["spectrum", "--config", "c.json", "--out", "b"], d), 0);
    let (ma, mb) = (manifest(&d.join("a")), manifest(&d.join("b")));
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.config_sha256, mb.config_sha256);
}

#[test]
fn invalid_configs_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "bad.json", "{ \"schema_version\": 1, ");
    assert_eq!(mpdsa(&["spectrum", "--config", "bad.json", "--out", "o"], d), 2);
    write(d, "extra.json", &PATH3.replacen("\"g\": 0.0", "\"g\": 0.0, \"gg\": 1", 1));
    assert_eq!(mpdsa(&["run", "--config", "extra.json", "--out", "o"], d), 2);
    assert_eq!(mpdsa(&["evc", "--config", "extra.json", "--out", "o"], d), 2);
    write(d, "c.json", PATH3);
    assert_eq!(mpdsa(&["evc", "--config", "c.json", "--out", "o"], d), 2);
    assert_eq!(mpdsa(&["sweep", "--config", "c.json", "--out", "o", "--axis", "g", "--values"], d), 2);
    assert_eq!(mpdsa(&["spectrum", "--config", "c.json", "--out", "o", "--threads", "0"], d), 2);
    assert_eq!(mpdsa(&["frobnicate"], d), 2);
    assert!(!d.join("o").exists());
}

#[test]
fn out_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "c.json", &PATH3.replacen("\"trials\": 2", "\"trials\": 2, \"out_dir\": \"from_config\"", 1));
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mpdsa"));
        c.args(["spectrum", "--config", "c.json"]).args(extra).current_dir(d).env_remove("MPDSA_OUT");
        if let Some(e) = env {
            c.env("MPDSA_OUT", e);
        }
        c.status().unwrap().code().unwrap()
    };
    assert_eq!(run(None, &[]), 0);
    assert!(d.join("from_config/manifest.json").exists());
    assert_eq!(run(Some("from_env"), &[]), 0);
    assert!(d.join("from_env/manifest.json").exists());
    assert_eq!(run(Some("from_env2"), &["--out", "from_flag"]), 0);
    assert!(d.join("from_flag/manifest.json").exists());
    assert!(!d.join("from_env2").exists());
}

#[test]
fn smallest_audit_has_one_probability_row() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "a.json",
        r#"{
  "schema_version": 1,
  "geometry": {"kind": "lattice", "dim": 1},
  "n_particles": 2,
  "g": 30.0,
  "interaction": {"kind": "step", "amplitude": 1.0, "range": 1},
  "l0": 6,
  "seed": 4,
  "experiments": [{"kind": "audit", "center": [[1], [0]], "k_max": 0}]
}"#,
    );
    assert_eq!(mpdsa(&["audit", "--config", "a.json", "--out", "o", "--trials", "10"], d), 0);
    let s = summary(&d.join("o"));
    let rows = s["runs"][0]["summary"]["experiments"][0]["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["nonloc"]["trials"], 10);
    let csv = fs::read_to_string(d.join("o/audit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn evc_closed_form_flag_and_dynamics_point_ball() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "e.json",
        r#"{
  "schema_version": 1,
  "geometry": {"kind": "lattice", "dim": 1},
  "n_particles": 1,
  "g": 4.0,
  "trials": 1000,
  "experiments": [
    {"kind": "evc", "x": [[0]], "y": [[5]], "radius": 0, "s_grid": [0.0, 0.04, 0.2, 0.4, 0.8]},
    {"kind": "dynamics", "center": [[3]], "radius": 0, "t_points": 5, "trials": 1}
  ]
}"#,
    );
    assert_eq!(mpdsa(&["run", "--config", "e.json", "--out", "o"], d), 0);
    let s = summary(&d.join("o"));
    let ex = &s["runs"][0]["summary"]["experiments"];
    assert_eq!(ex[0]["result"]["closed_form_pass"], Value::Bool(true));
    let dyn_csv = fs::read_to_string(d.join("o/dynamics.csv")).unwrap();
    let row: Vec<&str> = dyn_csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[4..], ["0", "1", "1", "1"]);
}

#[test]
fn g_sweep_writes_sub_runs_and_trend() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "s.json",
        r#"{
  "schema_version": 1,
  "geometry": {"kind": "lattice", "dim": 1},
  "n_particles": 1,
  "g": 1.0,
  "trials": 30,
  "experiments": [{"kind": "probability", "event": {"kind": "singular", "energy": 1.0}, "center": [[0]], "radius": 4}]
}"#,
    );
    assert_eq!(mpdsa(&["sweep", "--config", "s.json", "--out", "o", "--axis", "g", "--values", "3,10,30"], d), 0);
    for v in ["3", "10", "30"] {
        assert!(d.join(format!("o/g_{v}/probability.csv")).exists());
    }
    let trend = fs::read_to_string(d.join("o/trend.csv")).unwrap();
    assert_eq!(trend.lines().count(), 4);
    assert!(trend.starts_with("axis,value,experiment,kind,metric,estimate,ci_low,ci_high,violations"));
    assert!(verify_manifest(&d.join("o")).unwrap().is_empty());
}
