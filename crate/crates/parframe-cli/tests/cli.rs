//! End-to-end tests of the command-line contract: artifact layout, exit
//! codes, and determinism of the emitted coefficient CSV.

use std::path::Path;
use std::process::{Command, Output};

fn parframe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parframe"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).expect("manifest written");
}

const CIRCLE: &str = r#"{
  "manifold": "circle:6.0",
  "frame": { "m": 1, "epsilon": 0.49, "lambda": 3, "n": 3 },
  "p": 2.0,
  "resolution": [1024],
  "field": "bump"
}"#;

#[test]
fn build_writes_artifacts() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(
        tmp.path(),
        "torus.json",
        r#"{ "manifold": "torus:2:2.0", "frame": { "m": 1, "epsilon": 0.49, "lambda": 3, "n": 3 } }"#,
    );
    let out = parframe(tmp.path(), &["build", "--config", "torus.json", "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["index.json", "cover.json", "generators.json", "manifest.json"] {
        assert!(tmp.path().join("art").join(artifact).exists(), "missing {artifact}");
    }
}

#[test]
fn epsilon_out_of_range_is_config_error() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(
        tmp.path(),
        "bad.json",
        r#"{ "manifold": "torus:2:2.0", "frame": { "m": 1, "epsilon": 0.7, "lambda": 3, "n": 3 } }"#,
    );
    let out = parframe(tmp.path(), &["build", "--config", "bad.json", "--out", "art"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon out of range"));
}

#[test]
fn oversized_auto_cover_is_config_error() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(
        tmp.path(),
        "sphere.json",
        r#"{ "manifold": "sphere", "cover": "auto:2.5",
             "frame": { "m": 1, "epsilon": 0.49, "lambda": 3, "n": 3 } }"#,
    );
    let out = parframe(tmp.path(), &["build", "--config", "sphere.json", "--out", "art"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cover radius"));
}

#[test]
fn analyze_without_artifacts_is_missing() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(tmp.path(), "circle.json", CIRCLE);
    let out = parframe(tmp.path(), &["analyze", "--config", "circle.json", "--out", "art"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn analyze_emits_csv_and_report_deterministically() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(tmp.path(), "circle.json", CIRCLE);
    let build = parframe(tmp.path(), &["build", "--config", "circle.json", "--out", "art"]);
    assert_eq!(build.status.code(), Some(0), "{}", String::from_utf8_lossy(&build.stderr));

    let run = |seed: &str| {
        let out = parframe(
            tmp.path(),
            &["analyze", "--config", "circle.json", "--out", "art", "--seed", seed],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(tmp.path().join("art/coefficients.csv")).expect("csv written")
    };
    let first = run("11");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("art/analyze-report.json")).expect("report"),
    )
    .expect("valid report json");
    let names: Vec<_> = report["records"]
        .as_array()
        .expect("records array")
        .iter()
        .map(|r| r["name"].as_str().expect("name").to_string())
        .collect();
    assert!(names.contains(&"analyze.residual".to_string()));
    assert!(first.len() > 100, "csv has rows");

    // Identical config + seed must reproduce the CSV byte for byte.
    let second = run("11");
    assert_eq!(first, second);
}

#[test]
fn analyze_zero_field_reports_undefined_residual() {
    let tmp = tempfile::tempdir().expect("tempdir");
    write_manifest(
        tmp.path(),
        "zero.json",
        r#"{ "manifold": "circle:6.0", "frame": { "m": 1, "epsilon": 0.49, "lambda": 3, "n": 3 },
             "resolution": [1024], "field": "zero" }"#,
    );
    let build = parframe(tmp.path(), &["build", "--config", "zero.json", "--out", "art"]);
    assert_eq!(build.status.code(), Some(0));
    let out = parframe(tmp.path(), &["analyze", "--config", "zero.json", "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("art/coefficients.csv")).expect("csv");
    assert_eq!(csv.lines().count(), 1, "zero field yields a header-only CSV");
    let report = std::fs::read_to_string(tmp.path().join("art/analyze-report.json")).expect("rep");
    assert!(report.contains("undefined"));
}

#[test]
fn verify_only_filters_passes_and_tightening_fails() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let ok = parframe(tmp.path(), &["verify", "--only", "filters", "--out", "v1"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("v1/report.json")).expect("report"),
    )
    .expect("valid report json");
    let names: Vec<_> = report["records"]
        .as_array()
        .expect("records")
        .iter()
        .map(|r| r["name"].as_str().expect("name").to_string())
        .collect();
    assert_eq!(names, vec!["filters.qmf", "filters.d4-phi1"]);

    let tight = parframe(
        tmp.path(),
        &["verify", "--only", "filters", "--tol-scale", "0.01", "--out", "v2"],
    );
    assert_eq!(tight.status.code(), Some(1));
}
