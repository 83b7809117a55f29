mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn blinkid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blinkid"))
        .args(args)
        .output()
        .unwrap()
}

fn simulate_and_run(dir: &Path, scene: &str, ext: &str) -> (Output, String) {
    let events = dir.join(format!("e.{ext}"));
    let truth = dir.join("t.json");
    let report = dir.join("r.json");
    let sim = blinkid(&[
        "simulate",
        "--scene",
        fixture(scene).to_str().unwrap(),
        "--out",
        events.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(
        sim.status.success(),
        "{}",
        String::from_utf8_lossy(&sim.stderr)
    );
    let run = blinkid(&[
        "run",
        "--events",
        events.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--config",
        fixture("default.cfg").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    (run, std::fs::read_to_string(report).unwrap_or_default())
}

#[test]
fn clean_beacon_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (run, report) = simulate_and_run(dir.path(), "clean_beacon.json", "csv");
    assert_eq!(run.status.code(), Some(0));
    assert!(report.contains("\"mar\": 100.0"), "{report}");
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(
        stdout.starts_with("metric,value\nmar,100.0000\n"),
        "{stdout}"
    );
}

#[test]
fn binary_and_csv_give_the_same_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, csv) = simulate_and_run(a.path(), "moving_beacons.json", "csv");
    let (_, bin) = simulate_and_run(b.path(), "moving_beacons.json", "bin");
    assert!(!csv.is_empty());
    assert_eq!(csv, bin);
}

#[test]
fn reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ra) = simulate_and_run(a.path(), "moving_beacons.json", "bin");
    let (_, rb) = simulate_and_run(b.path(), "moving_beacons.json", "bin");
    assert_eq!(ra, rb);
}

#[test]
fn exit_codes() {
    assert_eq!(blinkid(&[]).status.code(), Some(1));
    assert_eq!(blinkid(&["run", "--events"]).status.code(), Some(1));
    assert_eq!(
        blinkid(&["protocol", "encode", "--payload", "99"])
            .status
            .code(),
        Some(2)
    );
    let out = blinkid(&["protocol", "decode", "--bits", "01010100111"]);
    assert_eq!(
        (out.status.code(), out.stdout.as_slice()),
        (Some(0), b"42\n".as_slice())
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = blinkid(&[
        "simulate",
        "--scene",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("e.csv").to_str().unwrap(),
        "--truth",
        dir.path().join("t.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn bench_prints_rates() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_run(dir.path(), "clean_beacon.json", "bin");
    let out = blinkid(&[
        "bench",
        "--events",
        dir.path().join("e.bin").to_str().unwrap(),
        "--config",
        fixture("default.cfg").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("events "));
    assert!(lines[1].starts_with("decode ") && lines[1].ends_with(" events/s"));
    assert!(lines[2].starts_with("pipeline "));
}
