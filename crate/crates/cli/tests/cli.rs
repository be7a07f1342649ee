use dsm_core::case_study;
use std::process::{Command, Output};

fn dsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsm"))
        .args(args)
        .output()
        .expect("run dsm")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn registry_file(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("registry.json");
    std::fs::write(&path, case_study::REGISTRY_JSON).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn matrix_table_shows_sums() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsm(&["matrix", &registry_file(&dir), "--data-type", "traffic"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let sums: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| l.starts_with("SUM"))
        .map(|l| l.split('|').skip(1).map(str::trim).collect())
        .collect();
    assert_eq!(sums, [["5", "0", "1"], ["-1", "-4", "-3"]]);
}

#[test]
fn matrix_json_and_unknown_type() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry_file(&dir);
    let out = dsm(&["matrix", &reg, "--format", "json"]);
    let tables: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(tables.as_array().unwrap().len(), 1);
    let out = dsm(&["matrix", &reg, "--data-type", "weather"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("weather"));
}

#[test]
fn registry_validate_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsm(&["registry", "validate", &registry_file(&dir)]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("ok: "));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"sources\": 3}").unwrap();
    let out = dsm(&["registry", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_scripts_assert_cleanly() {
    for (name, _) in case_study::scripts() {
        let out = dsm(&["simulate", "assert", name.trim_end_matches(".json")]);
        assert!(out.status.success(), "{name}: {}", stdout(&out));
    }
}

#[test]
fn failing_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut script: serde_json::Value = serde_json::from_str(case_study::FLOOD_SCRIPT).unwrap();
    script["expectations"] = serde_json::json!([
        { "expect": "decision-count", "count": 99 }
    ]);
    let path = dir.path().join("wrong.json");
    std::fs::write(&path, script.to_string()).unwrap();
    let out = dsm(&["simulate", "assert", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn run_exports_trace_and_store() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let store = dir.path().join("store");
    let out = dsm(&[
        "simulate",
        "run",
        "flood",
        "--export-trace",
        trace.to_str().unwrap(),
        "--store-dir",
        store.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("-> remote-sensing"));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(trace["decisions"].as_array().unwrap().len(), 2);

    let csv = dir.path().join("decisions.csv");
    let out = dsm(&[
        "store",
        "export",
        store.to_str().unwrap(),
        "--kind",
        "decision",
        "--from",
        "0",
        "--to",
        "5400000",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("sequence,event-time,kind,data-type,source,body")
    );
    assert_eq!(lines.count(), 2);

    let out = dsm(&[
        "store",
        "timeline",
        store.to_str().unwrap(),
        "--data-type",
        "traffic",
        "--from",
        "0",
        "--to",
        "5400000",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("traffic-sensors"));
}

#[test]
fn unknown_script_is_an_error() {
    let out = dsm(&["simulate", "run", "no-such-script"]);
    assert_eq!(out.status.code(), Some(2));
}
