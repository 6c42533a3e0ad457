// Black-box tests of the `asym` binary. The file name sorts ahead of the
// acceptance target so these run even when an acceptance criterion fails.

use std::process::{Command, Output};

use serde_json::Value;

fn asym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asym")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = asym(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(args: &[&str]) -> Value {
    serde_json::from_slice(&ok(args)).unwrap()
}

fn code(args: &[&str]) -> i32 {
    asym(args).status.code().unwrap()
}

const SMALL_DIRECTIONS: [&str; 8] = ["directions", "--example", "paraboloid", "--t", "-1", "--mesh", "0.1", "--radius-count=4"];

#[test]
fn examples_report_layout() {
    let doc = json(&["examples"]);
    assert_eq!(doc["tool"], "asym");
    assert_eq!(doc["command"], "examples");
    let ids: Vec<&str> = doc["result"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["paraboloid", "parusinski", "vanishing_component"]);
    assert!(!doc["anchors"].as_array().unwrap().is_empty());
}

#[test]
fn csv_starts_with_comment_lines() {
    let text = String::from_utf8(ok(&["examples", "--format", "csv"])).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# asym "), "{}", lines[0]);
    assert!(lines[0].ends_with(" examples"));
    let config: Value = serde_json::from_str(lines[1].strip_prefix("# config ").unwrap()).unwrap();
    assert_eq!(config["format"], "csv");
    assert_eq!(lines[2], "id,source,polynomial");
    assert_eq!(lines.len(), 6);
}

#[test]
fn runs_are_byte_identical() {
    let mut args = SMALL_DIRECTIONS.to_vec();
    args.extend(["--seed", "5"]);
    assert_eq!(ok(&args), ok(&args));
    let scan = ["scan-kinf", "--poly", "z - x^2 - y^2", "--radius-count", "4", "--starts", "40"];
    assert_eq!(ok(&scan), ok(&scan));
}

#[test]
fn thread_count_does_not_change_results() {
    let mut one = SMALL_DIRECTIONS.to_vec();
    one.extend(["--threads", "1"]);
    let mut four = SMALL_DIRECTIONS.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(json(&one)["result"], json(&four)["result"]);
}

#[test]
fn directions_of_the_paraboloid() {
    let doc = json(&SMALL_DIRECTIONS);
    let pts = doc["result"]["directions"]["points"].as_array().unwrap();
    assert!(!pts.is_empty());
    for p in pts {
        assert!(p[2].as_f64().unwrap() > 0.99, "{p}");
    }
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let path_str = path.to_str().unwrap();
    let mut args = vec!["examples", "--example", "parusinski"];
    let stdout = ok(&args);
    args.extend(["--out", path_str]);
    assert!(ok(&args).is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
}

#[test]
fn poly_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    let doc = json(&["examples", "--example", "paraboloid"]);
    std::fs::write(&path, doc["result"][0]["polynomial"].to_string()).unwrap();
    let flow = json(&["flow", "--poly-file", path.to_str().unwrap(), "--x0", "3", "4", "24", "--t", "-0.5"]);
    assert_eq!(flow["result"]["trajectory"]["status"], "reached");
    assert_eq!(flow["result"]["bounds"]["drift"]["holds"], true);
}

#[test]
fn negative_numbers_are_values() {
    let doc = json(&[
        "flow", "--poly", "z - x^2 - y^2", "--x0", "-3", "4", "24", "--t", "-1",
    ]);
    assert_eq!(doc["config"]["x0"][0], -3.0);
    assert_eq!(doc["config"]["t"], -1.0);
}

#[test]
fn exit_codes() {
    // precondition failures and bad flags
    assert_eq!(code(&["examples", "--example", "nope"]), 2);
    assert_eq!(code(&["directions", "--t", "0"]), 2);
    assert_eq!(code(&["directions", "--poly", "x*y", "--example", "paraboloid", "--t", "0"]), 2);
    assert_eq!(code(&["directions", "--example", "paraboloid", "--t", "0", "--mesh", "0.9"]), 2);
    assert_eq!(code(&["lipschitz", "--example", "paraboloid", "--t", "0", "--pairs", "1"]), 2);
    assert_eq!(code(&["flow", "--poly", "x^2 + y^2", "--x0", "0", "0", "--t", "1"]), 2);
    // unreadable polynomials
    assert_eq!(code(&["directions", "--poly", "x^^2", "--t", "0"]), 3);
    assert_eq!(code(&["directions", "--poly-file", "/nonexistent/f.json", "--t", "0"]), 3);
    // unwritable output
    assert_eq!(code(&["examples", "--out", "/nonexistent/dir/out.json"]), 4);
    // help is not an error
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn errors_go_to_stderr() {
    let out = asym(&["examples", "--example", "nope"]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn volume_csv_has_status_column() {
    let text = String::from_utf8(ok(&[
        "volume", "--example", "paraboloid", "--t-grid", "0", "--mesh", "0.1", "--radius-count", "4", "--format", "csv",
    ]))
    .unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows[0], "t,volume,error_bar,method,status");
    assert!(rows[1].ends_with(",lower_dimensional"), "{}", rows[1]);
}
