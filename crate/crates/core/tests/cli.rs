use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn switchstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchstab"))
        .args(args)
        .env_remove("SWITCHSTAB_MAX_LIFT_ENTRIES")
        .output()
        .unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad report: {e}\n{}", String::from_utf8_lossy(&out.stdout)))
}

fn path(name: &str) -> String {
    data(name).display().to_string()
}

#[test]
fn stability_interval_box_is_stable() {
    let out = switchstab(&["stability", "-i", &path("interval_box.json"), "-p", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "stability");
    assert!(r["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(r["result"]["verdict"], "stable");
    assert_eq!(
        r["result"]["radius"]["assumption_path"],
        "orthant_invariant"
    );
    let v = r["result"]["radius"]["value"].as_f64().unwrap();
    assert!((v - 0.945416).abs() < 1e-6);
}

#[test]
fn stability_even_p_on_interval_box_is_unstable() {
    let out = switchstab(&["stability", "-i", &path("interval_box.json"), "-p", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["result"]["verdict"], "unstable");
}

#[test]
fn unsupported_odd_p_exits_4() {
    let out = switchstab(&["stability", "-i", &path("rotation_pair.json"), "-p", "1"]);
    assert_eq!(out.status.code(), Some(4));
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "unsupported");
    assert!(r["result"]["radius"]["value"].is_null());
    assert!(!r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn markov_open_loop_exit_2() {
    let out = switchstab(&["markov", "-i", &path("three_mode_markov.json"), "-p", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let v = report(&out)["result"]["value"].as_f64().unwrap();
    assert!((v - 1.221).abs() < 1e-3);
}

#[test]
fn markov_closed_loop_is_stable() {
    let out = switchstab(&[
        "markov",
        "-i",
        &path("three_mode_markov.json"),
        "-p",
        "1",
        "--closed-loop",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "stable");
    assert_eq!(
        r["result"]["closed_loop_modes"].as_array().unwrap().len(),
        3
    );
}

#[test]
fn markov_general_p_needs_flag() {
    let out = switchstab(&["markov", "-i", &path("three_mode_markov.json"), "-p", "3"]);
    assert_eq!(out.status.code(), Some(4));
    let out = switchstab(&[
        "markov",
        "-i",
        &path("three_mode_markov.json"),
        "-p",
        "3",
        "--experimental-general-p",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["experimental"], true);
    assert!(r["result"]["verdict"].is_null());
}

#[test]
fn lyapunov_with_validation_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cert_path = dir.path().join("cert.json");
    let out = switchstab(&[
        "lyapunov",
        "-i",
        &path("switching_pair.json"),
        "-p",
        "2",
        "--validate",
        "exact",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(&out);
    assert_eq!(r["result"]["validation"]["passed"], true);
    std::fs::write(&cert_path, r["result"]["certificate"].to_string()).unwrap();
    let out = switchstab(&[
        "validate",
        "--cert",
        cert_path.to_str().unwrap(),
        "-i",
        &path("switching_pair.json"),
        "--mode",
        "mc:500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["passed"], true);
}

#[test]
fn validate_rejects_a_tampered_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert_path = dir.path().join("cert.json");
    std::fs::write(
        &cert_path,
        r#"{"degree": 1, "kind": "cone_linear_norm", "f": [1.0, 1.0], "gamma": 0.1}"#,
    )
    .unwrap();
    let out = switchstab(&[
        "validate",
        "--cert",
        cert_path.to_str().unwrap(),
        "-i",
        &path("switching_pair.json"),
        "--mode",
        "exact",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["result"]["passed"], false);
    assert!(r["result"]["worst"]["ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn jsr_on_uniform_law_is_assumption_error() {
    let out = switchstab(&["jsr", "-i", &path("interval_box.json"), "--depth", "4"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(report(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("atomic"));
}

#[test]
fn jsr_bracket_report() {
    let out = switchstab(&["jsr", "-i", &path("switching_pair.json"), "--depth", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["result"]["lower"].as_f64().unwrap() <= r["result"]["upper"].as_f64().unwrap());
}

#[test]
fn limit_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("limit.csv");
    let out = switchstab(&[
        "limit",
        "-i",
        &path("scalar_uniform.json"),
        "--pmax",
        "4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,value");
    assert_eq!(lines.len(), 5);
    assert_eq!(
        report(&out)["result"]["entries"].as_array().unwrap().len(),
        4
    );
}

#[test]
fn lift_cap_env_var_gives_exit_5() {
    let out = Command::new(env!("CARGO_BIN_EXE_switchstab"))
        .args(["pradius", "-i", &path("interval_box.json"), "-p", "8"])
        .env("SWITCHSTAB_MAX_LIFT_ENTRIES", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn schema_errors_exit_1_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"type": "iid", "dim": 1, "distribution": {"kind": "atomic", "atoms": [{"p": 0.4, "M": [[1.0]]}]}}"#,
    )
    .unwrap();
    let out = switchstab(&["pradius", "-i", bad.to_str().unwrap(), "-p", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(r["error"]["pointer"]
        .as_str()
        .unwrap()
        .starts_with("/distribution"));

    let out = switchstab(&["pradius", "-i", "/nonexistent/file.json", "-p", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(switchstab(&["pradius"]).status.code(), Some(1));
    assert_eq!(switchstab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(switchstab(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_markov_and_output_flag() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = switchstab(&[
        "simulate",
        "-i",
        &path("three_mode_markov.json"),
        "--paths",
        "200",
        "--horizon",
        "5",
        "--seed",
        "3",
        "--x0",
        "1,-1",
        "--closed-loop",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "-o",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(r["result"]["truncated_paths"], 0);
    let csv = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn simulate_with_certificate_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cert_path = dir.path().join("cert.json");
    let out = switchstab(&["lyapunov", "-i", &path("interval_box.json"), "-p", "1"]);
    std::fs::write(
        &cert_path,
        report(&out)["result"]["certificate"].to_string(),
    )
    .unwrap();
    let out = switchstab(&[
        "simulate",
        "-i",
        &path("interval_box.json"),
        "--paths",
        "200",
        "--horizon",
        "30",
        "--seed",
        "1",
        "--x0",
        "0,1",
        "--cert",
        cert_path.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["result"]["certificate_decay"]["slope"].as_f64().unwrap() < 0.0);
    assert!(dir.path().join("certificate_moments.csv").exists());
}

#[test]
fn reports_are_deterministic() {
    let a = switchstab(&[
        "stability",
        "-i",
        &path("switching_pair.json"),
        "-p",
        "3",
        "--threads",
        "1",
    ]);
    let b = switchstab(&[
        "stability",
        "-i",
        &path("switching_pair.json"),
        "-p",
        "3",
        "--threads",
        "4",
    ]);
    let (mut ra, mut rb) = (report(&a), report(&b));
    ra["args"] = Value::Null;
    rb["args"] = Value::Null;
    assert_eq!(ra, rb);
}
