//! Runs the `pinchkit` binary and checks outputs and exit codes.

use std::process::{Command, Output};

fn pinchkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinchkit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn build_sphere_writes_file_and_echoes_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s2.txt");
    let o = pinchkit(&["build", "--preset", "sphere", "--n", "2", "--radius", "1", "--points", "4000", "--seed", "7", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(echo["points"], 4000);
    assert_eq!(echo["model"]["kind"], "sphere");
    assert_eq!(echo["model"]["seed"], 7);
    let m = pinchkit::manifold::SampledManifold::load(&path).unwrap();
    assert_eq!((m.len(), m.dim()), (4000, 2));
}

#[test]
fn build_quotient_echoes_its_radius() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    let o = pinchkit(&["build", "--preset", "p3e-quotient", "--p", "3", "--n", "7", "--points", "1500", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let a = echo["quotient_radius"].as_f64().unwrap();
    assert!((a - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn missing_points_is_a_usage_error() {
    let o = pinchkit(&["build", "--preset", "sphere", "--n", "2", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--points"));
}

#[test]
fn unknown_preset_and_flags_are_usage_errors() {
    assert_eq!(pinchkit(&["gh-approx", "--preset", "torus"]).status.code(), Some(2));
    assert_eq!(pinchkit(&["spectrum", "--preset", "s2", "--colour", "red"]).status.code(), Some(2));
    assert_eq!(pinchkit(&["kahler"]).status.code(), Some(2));
}

#[test]
fn spectrum_prints_header_and_rows() {
    let o = pinchkit(&["spectrum", "--preset", "sphere", "--n", "2", "--points", "600", "--seed", "3", "--p", "0", "--k", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue,residual,reference,within_margin,converged");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("0,"));
    // The second row compares against λ₁(S²) = 2.
    assert_eq!(lines[2].split(',').nth(3), Some("2"));
}

#[test]
fn spectrum_rejects_degree_above_dimension() {
    let o = pinchkit(&["spectrum", "--preset", "sphere", "--n", "2", "--points", "100", "--p", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_reads_a_built_manifold() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let p = path.to_str().unwrap();
    assert_eq!(pinchkit(&["build", "--preset", "product", "--factors", "2:1:20,2:1:20", "--out", p]).status.code(), Some(0));
    let o = pinchkit(&["spectrum", "--manifold", p, "--p", "2", "--k", "3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert!(v["rows"][0]["reference"].is_null());
}

#[test]
fn orientability_on_the_quotient_is_unorientable() {
    let o = pinchkit(&["orientability", "--preset", "p3e", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["result"]["report"]["verdict"], "unorientable");
    assert_eq!(r["result"]["report"]["matches_ground_truth"], true);
    assert_eq!(r["schema_version"], pinchkit::report::SCHEMA_VERSION);
    assert!(r["exponents"].is_object());
}

#[test]
fn grosjean_report_on_a_small_product() {
    let o = pinchkit(&["verify-grosjean", "--preset", "product", "--factors", "2:1:24,2:1:24", "--p", "2", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["result"]["kind"], "verify-grosjean");
    assert!(r["result"]["lambda_c_p"].as_f64().unwrap() < 1e-6);
    assert!(r["delta"].is_number());
}

#[test]
fn toolkit_reports_are_byte_identical_and_csv_flattens() {
    let a = pinchkit(&["compare-toolkit", "--seed", "4"]);
    let b = pinchkit(&["compare-toolkit", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = pinchkit(&["run", "--suite", "compare-toolkit", "--seed", "4", "--format", "csv"]);
    let text = stdout(&c);
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l == "schema_version,1"));
}

#[test]
fn run_accepts_a_config_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"suite":"compare-toolkit","seed":2}"#).unwrap();
    let out = dir.path().join("report.json");
    let o = pinchkit(&["run", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["config"]["seed"], 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"suite":"compare-toolkit","seed":2,"timestamp":"now"}"#).unwrap();
    assert_eq!(pinchkit(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}
