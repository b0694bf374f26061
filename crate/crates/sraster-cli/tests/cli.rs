//! End-to-end runs of the `sraster` binary.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn sraster(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sraster"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    sraster(args).output().expect("binary runs")
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = sraster(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary starts");
    child
        .stdin
        .as_mut()
        .expect("stdin is piped")
        .write_all(stdin.as_bytes())
        .expect("stdin accepts input");
    child.wait_with_output().expect("binary exits")
}

fn stdout_lines(output: &Output) -> Vec<String> {
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(str::to_string)
        .collect()
}

fn write_file(path: &Path, content: &str) {
    std::fs::write(path, content).expect("temp dir is writable");
}

/// Two three-point columns in adjacent tiles at precision 4, plus an
/// outlier that never reaches the threshold.
const BATCH_INPUT: &str = "\
0.00004,0.00001\n\
0.00004,0.00002\n\
0.00004,0.00003\n\
0.00012,0.00001\n\
0.00012,0.00002\n\
0.00012,0.00003\n\
5.0,5.0\n";

#[test]
fn batch_clusters_a_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.csv");
    write_file(&input, BATCH_INPUT);
    let output = run(&[
        "batch",
        "--prec",
        "4",
        "--tau",
        "3",
        "--mu",
        "2",
        input.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(
        stdout_lines(&output),
        vec!["cluster_id,x,y", "0,0.0000,0.0000", "0,0.0001,0.0000"],
        "two adjacent significant tiles form one cluster; the outlier is noise"
    );
}

#[test]
fn batch_reads_stdin_when_input_is_a_dash() {
    let output = run_with_stdin(
        &["batch", "--prec", "4", "--tau", "3", "--mu", "2", "-"],
        BATCH_INPUT,
    );
    assert!(output.status.success());
    assert_eq!(stdout_lines(&output).len(), 3, "header plus two tile rows");
}

#[test]
fn batch_geojson_is_one_feature_per_cluster() {
    let output = run_with_stdin(
        &[
            "batch", "--prec", "4", "--tau", "3", "--mu", "2", "--format", "geojson", "-",
        ],
        BATCH_INPUT,
    );
    assert!(output.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).expect("valid JSON");
    assert_eq!(doc["type"], "FeatureCollection");
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), 1);
    assert_eq!(features[0]["geometry"]["type"], "MultiPoint");
    assert_eq!(features[0]["properties"]["tile_count"], 2);
    assert_eq!(
        features[0]["geometry"]["coordinates"].as_array().unwrap().len(),
        2
    );
}

/// Six records across three one-minute periods, all in one tile
/// neighborhood.
const STREAM_INPUT: &str = "\
1.00001,2.0,2021-01-01T00:00:10Z\n\
1.00002,2.0,2021-01-01T00:00:20Z\n\
1.00001,2.00001,2021-01-01T00:01:10Z\n\
1.00002,2.00001,2021-01-01T00:01:20Z\n\
1.00001,2.0,2021-01-01T00:02:10Z\n\
1.00002,2.0,2021-01-01T00:02:30Z\n";

#[test]
fn stream_emits_one_snapshot_per_complete_period() {
    let output = run_with_stdin(
        &[
            "stream", "--prec", "4", "--tau", "3", "--mu", "1", "--window", "2", "-",
        ],
        STREAM_INPUT,
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(
        stdout_lines(&output),
        vec![
            "period,cluster_id,x,y",
            "1,0,1.0000,2.0000",
            "2,0,1.0000,2.0000"
        ],
        "the tile crosses the threshold once two periods share the window"
    );
}

#[test]
fn stream_writes_to_an_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("stream.csv");
    let out = dir.path().join("rows.csv");
    write_file(&input, STREAM_INPUT);
    let output = run(&[
        "stream",
        "--prec",
        "4",
        "--tau",
        "3",
        "--mu",
        "1",
        "--window",
        "2",
        "-o",
        out.to_str().unwrap(),
        input.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(output.stdout.is_empty(), "rows go to the file, not stdout");
    let written = std::fs::read_to_string(&out).unwrap();
    assert!(written.starts_with("period,cluster_id,x,y\n"));
    assert_eq!(written.lines().count(), 3);
}

#[test]
fn stream_retain_points_adds_point_columns() {
    let output = run_with_stdin(
        &[
            "stream",
            "--prec",
            "4",
            "--tau",
            "3",
            "--mu",
            "1",
            "--window",
            "2",
            "--retain-points",
            "-",
        ],
        STREAM_INPUT,
    );
    assert!(output.status.success());
    let lines = stdout_lines(&output);
    assert_eq!(lines[0], "period,cluster_id,x,y,point_x,point_y");
    assert!(
        lines[1].starts_with("1,0,1.0000,2.0000,1.0000"),
        "row carries the original coordinates: {}",
        lines[1]
    );
    // Period 1's window holds all four points from periods 0 and 1.
    assert_eq!(lines.iter().filter(|l| l.starts_with("1,")).count(), 4);
}

#[test]
fn stream_geojson_carries_period_properties() {
    let output = run_with_stdin(
        &[
            "stream", "--prec", "4", "--tau", "3", "--mu", "1", "--window", "2", "--format",
            "geojson", "-",
        ],
        STREAM_INPUT,
    );
    assert!(output.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).expect("valid JSON");
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), 2, "one feature per period-cluster pair");
    assert_eq!(features[0]["properties"]["period"], 1);
    assert_eq!(features[1]["properties"]["period"], 2);
}

#[test]
fn late_records_are_reported_on_stderr() {
    let mut input = STREAM_INPUT.to_string();
    input.push_str("1.00001,2.0,2021-01-01T00:00:59Z\n");
    let output = run_with_stdin(
        &[
            "stream", "--prec", "4", "--tau", "3", "--mu", "1", "--window", "2", "-",
        ],
        &input,
    );
    assert!(output.status.success(), "late records are dropped, not fatal");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("dropped 1 late"),
        "stderr must count the straggler: {stderr}"
    );
}

#[test]
fn malformed_stream_row_exits_two_with_its_line() {
    let input = "1.0,2.0,2021-01-01T00:00:10Z\nnot-a-number,2.0,2021-01-01T00:00:20Z\n";
    let output = run_with_stdin(
        &["stream", "--prec", "4", "--tau", "1", "--mu", "1", "-"],
        input,
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "diagnostic names the line: {stderr}");
}

#[test]
fn bad_parameters_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.csv");
    write_file(&input, BATCH_INPUT);
    let over_precision = run(&["batch", "--prec", "99", input.to_str().unwrap()]);
    assert_eq!(over_precision.status.code(), Some(1));
    let unknown_flag = run(&["batch", "--franticness", "11", input.to_str().unwrap()]);
    assert_eq!(unknown_flag.status.code(), Some(1));
    let zero_workers = run(&["stream", "--pi", "0", input.to_str().unwrap()]);
    assert_eq!(zero_workers.status.code(), Some(1));
}

#[test]
fn missing_input_exits_two() {
    let output = run(&["batch", "/definitely/not/here.csv"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    assert!(run(&["stream", "--help"]).status.success());
}

const GENERATOR_SPEC: &str = r#"{
    "seed": 42,
    "num_periods": 3,
    "hubs": [
        { "center": [10.0, 10.0], "stddev": 0.0001, "points_per_period": 8 }
    ],
    "noise": {
        "points_per_period": 2,
        "bounds": { "min_x": -1.0, "max_x": 1.0, "min_y": -1.0, "max_y": 1.0 }
    },
    "period_seconds": 60,
    "epoch": 1600000000
}"#;

#[test]
fn generate_is_deterministic_and_feeds_stream() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_file(&spec, GENERATOR_SPEC);
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    assert!(run(&["generate", spec.to_str().unwrap(), "-o", first.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["generate", spec.to_str().unwrap(), "-o", second.to_str().unwrap()])
        .status
        .success());
    let first_bytes = std::fs::read(&first).unwrap();
    assert_eq!(
        first_bytes,
        std::fs::read(&second).unwrap(),
        "same spec, same bytes"
    );
    assert_eq!(first_bytes.iter().filter(|b| **b == b'\n').count(), 30);
    let truth = std::fs::read_to_string(dir.path().join("a.truth.csv")).unwrap();
    assert!(truth.starts_with("hub,period,x,y\n"));
    assert_eq!(truth.lines().count(), 4, "header plus one row per live period");

    let clustered = run(&[
        "stream",
        "--prec",
        "3",
        "--tau",
        "5",
        "--mu",
        "1",
        "--window",
        "2",
        "--epoch",
        "1600000000",
        first.to_str().unwrap(),
    ]);
    assert!(clustered.status.success());
    let lines = stdout_lines(&clustered);
    assert!(lines.len() > 1, "the hub must show up as a cluster");
    assert!(
        lines[1..].iter().all(|l| l.contains(",9.99") || l.contains(",10.0")),
        "clusters sit on the hub: {lines:?}"
    );
}

#[test]
fn malformed_generator_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_file(&spec, r#"{ "seed": 1, "num_periods": 2, "hobs": [] }"#);
    let out = dir.path().join("out.csv");
    let output = run(&["generate", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}
