//! End-to-end tests of the `xlatsim` binary: exit codes, round trips, and
//! output shapes.

use std::io::Write;
use std::process::{Command, Output};

fn xlatsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlatsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

const SMALL: &[&str] = &["--set", "trace.pages=256", "--set", "trace.accesses=2000"];

#[test]
fn bad_config_key_exits_2() {
    let out = xlatsim(&["run", "--set", "no.such.key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no.such.key"));
}

#[test]
fn bad_config_value_exits_2() {
    let out = xlatsim(&["run", "--set", "pressure=1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = xlatsim(&["run", "--mode", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_trace_exits_3_with_line_number() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "I 10\nL 0x1000\nQ 0x2000").unwrap();
    let out = xlatsim(&["run", "--trace", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 3"));
}

#[test]
fn missing_trace_file_exits_3() {
    let out = xlatsim(&["run", "--trace", "/nonexistent/trace.txt"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_trace_then_replay_matches_internal_generation() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("t.trace");
    let out = xlatsim(
        &[
            &["gen-trace", "--out", trace_path.to_str().unwrap()],
            SMALL,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let replayed = xlatsim(&[
        "run",
        "--format",
        "csv",
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    let generated = xlatsim(&[&["run", "--format", "csv"], SMALL].concat());
    assert!(replayed.status.success() && generated.status.success());
    assert_eq!(stdout(&replayed), stdout(&generated));
}

#[test]
fn print_config_round_trips_through_a_config_file() {
    let printed = xlatsim(&["print-config", "--set", "spec.n_max=6", "--mode", "nested"]);
    assert!(printed.status.success());
    let text = stdout(&printed);
    assert!(text.contains("spec.n_max = 6"));
    assert!(text.contains("mode = nested"));

    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(text.as_bytes()).unwrap();
    let reprinted = xlatsim(&["print-config", "--config", file.path().to_str().unwrap()]);
    assert!(reprinted.status.success(), "{}", stderr(&reprinted));
    assert_eq!(stdout(&reprinted), text);
}

#[test]
fn sweep_emits_header_plus_one_row_per_value() {
    let out = xlatsim(
        &[
            &["sweep", "--axis", "pressure", "--values", "0.4,0,0.2"],
            SMALL,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("mode,seed,pressure,"));
    // Rows come out sorted by the axis value.
    let pressures: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(pressures, ["0.000000", "0.200000", "0.400000"]);
}

#[test]
fn run_json_lines_is_valid_json() {
    let out = xlatsim(&[&["run", "--format", "json-lines"], SMALL].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["accesses"], 2000);
    assert_eq!(v["mode"], "native");
}

#[test]
fn unknown_sweep_axis_exits_2() {
    let out = xlatsim(&["sweep", "--axis", "sideways", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
