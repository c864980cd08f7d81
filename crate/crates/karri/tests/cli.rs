//! End-to-end runs of the command-line binary: output files, exit codes,
//! and flag handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn karri() -> Command {
    Command::new(env!("CARGO_BIN_EXE_karri"))
}

/// A six-vertex corridor, drivable and walkable in both directions.
fn write_instance(dir: &Path) {
    let mut net = String::from("tail,head,mode,travel_time_ds\n");
    for a in 0..5 {
        for (x, y) in [(a, a + 1), (a + 1, a)] {
            net.push_str(&format!("{x},{y},veh,100\n"));
            net.push_str(&format!("{x},{y},psg,800\n"));
        }
    }
    fs::write(dir.join("net.csv"), net).unwrap();
    fs::write(
        dir.join("veh.csv"),
        "initial_location,service_start_ds,service_end_ds,capacity\n0,0,200000,4\n5,0,200000,4\n",
    )
    .unwrap();
    fs::write(
        dir.join("req.csv"),
        "origin,destination,t_req_ds\n1,4,0\n3,0,300\n2,5,500\n",
    )
    .unwrap();
}

fn run(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.join("out");
    karri()
        .arg("--network")
        .arg(dir.join("net.csv"))
        .arg("--vehicles")
        .arg(dir.join("veh.csv"))
        .arg("--requests")
        .arg(dir.join("req.csv"))
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn request_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("out/events.csv")).unwrap();
    text.lines()
        .filter(|l| l.starts_with("request,"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn both_mode_reports_matching_reference_costs() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    let out = run(dir.path(), &["--mode", "both"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = request_rows(dir.path());
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[4], r[5], "request {}: cost {} but reference {}", r[1], r[4], r[5]);
    }
    assert!(dir.path().join("out/stats.csv").exists());
}

#[test]
fn oracle_mode_writes_the_same_costs_as_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    assert!(run(dir.path(), &["--mode", "karri"]).status.success());
    let engine: Vec<String> = request_rows(dir.path()).iter().map(|r| r[4].clone()).collect();
    assert!(run(dir.path(), &["--mode", "oracle"]).status.success());
    let oracle: Vec<String> = request_rows(dir.path()).iter().map(|r| r[4].clone()).collect();
    assert_eq!(engine, oracle);
}

#[test]
fn zero_walking_radius_leaves_one_meeting_point_per_side() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    assert!(run(dir.path(), &["--rho", "0"]).status.success());
    for r in request_rows(dir.path()) {
        assert_eq!((r[11].as_str(), r[12].as_str()), ("1", "1"), "request {}", r[1]);
    }
}

#[test]
fn a_config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    fs::write(dir.path().join("karri.conf"), "# walking radius\nrho = 2000\nseed = 7\n").unwrap();
    let cfg = dir.path().join("karri.conf");
    let cfg_flag = ["--config", cfg.to_str().unwrap()];

    assert!(run(dir.path(), &cfg_flag).status.success());
    for r in request_rows(dir.path()) {
        assert!(r[11].parse::<u32>().unwrap() > 1, "radius from the config file not in effect");
    }

    let mut with_override = cfg_flag.to_vec();
    with_override.extend(["--rho", "0"]);
    assert!(run(dir.path(), &with_override).status.success());
    for r in request_rows(dir.path()) {
        assert_eq!(r[11], "1", "flag did not override the config file");
    }

    fs::write(dir.path().join("karri.conf"), "walking_radius = 1\n").unwrap();
    let out = run(dir.path(), &cfg_flag);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key 'walking_radius'"));
}

#[test]
fn usage_errors_exit_two_and_data_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());

    let out = karri().arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = karri().arg("--vehicles").arg(dir.path().join("veh.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing required inputs must be a usage error");

    fs::write(dir.path().join("net.csv"), "tail,head,mode,travel_time_ds\n0,1,veh,0\n").unwrap();
    let out = run(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("net.csv:2"), "stderr should point at the bad line: {err}");
    assert!(err.contains("non-positive travel time"), "stderr: {err}");
}

#[test]
fn unsorted_requests_warn_and_still_run() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    fs::write(dir.path().join("req.csv"), "origin,destination,t_req_ds\n2,5,500\n1,4,0\n").unwrap();
    let out = run(dir.path(), &[]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not sorted"), "stderr: {err}");
    assert_eq!(request_rows(dir.path()).len(), 2);
}
