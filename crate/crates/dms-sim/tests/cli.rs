//! End-to-end checks of the command line binary: argument wiring, file
//! outputs and exit codes, run against the shipped case study.

mod common;

use std::process::Command;

use common::example_file;

fn dms_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dms-sim"))
}

fn case_study() -> String {
    example_file("case_study.dms").display().to_string()
}

#[test]
fn validate_reports_shape_and_exits_zero() {
    let out = dms_sim().args(["validate", &case_study()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("3 lps"), "{text}");
    assert!(text.contains("3 links"), "{text}");
}

#[test]
fn validate_rejects_a_broken_scenario_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dms");
    std::fs::write(
        &bad,
        "end_time 10\nseed 1\nlp A lookahead=1\nblock A.g create kind=K inter=const(1) -> out\nblock A.out portsend dest=NOWHERE\n",
    )
    .unwrap();
    let out = dms_sim()
        .args(["validate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("NOWHERE"), "{err}");
}

#[test]
fn run_writes_traces_and_reports_that_diff_clean_across_modes() {
    let dir = tempfile::tempdir().unwrap();
    let seq_trace = dir.path().join("seq.trace");
    let local_trace = dir.path().join("local.trace");
    let report = dir.path().join("report.csv");

    let out = dms_sim()
        .args([
            "run",
            &case_study(),
            "--mode",
            "seq",
            "--trace",
            seq_trace.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("lp A finished at 5000h"), "{stdout}");

    let out = dms_sim()
        .args([
            "run",
            &case_study(),
            "--mode",
            "local",
            "--trace",
            local_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    let records = std::fs::read_to_string(&report).unwrap();
    assert!(records.starts_with("lp_id,object_id,metric,value"));
    assert!(records.contains("A,run,executed_events,"));

    // Same seed, different modes: the traces must compare clean.
    let out = dms_sim()
        .args([
            "diff",
            seq_trace.to_str().unwrap(),
            local_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // A different seed must not.
    let other_trace = dir.path().join("other.trace");
    let out = dms_sim()
        .args([
            "run",
            &case_study(),
            "--mode",
            "seq",
            "--seed",
            "43",
            "--trace",
            other_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = dms_sim()
        .args([
            "diff",
            seq_trace.to_str().unwrap(),
            other_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stdout.is_empty());
}

#[test]
fn remote_mode_runs_from_a_hosts_file() {
    let dir = tempfile::tempdir().unwrap();
    let hosts = dir.path().join("hosts.txt");
    // Port 0 lets each worker pick a free port; the orchestrator collects
    // the real addresses before the run starts.
    std::fs::write(
        &hosts,
        "# firm to workstation\nA 127.0.0.1:0\nB 127.0.0.1:0\nC 127.0.0.1:0\n",
    )
    .unwrap();
    let remote_trace = dir.path().join("remote.trace");
    let out = dms_sim()
        .args([
            "run",
            &case_study(),
            "--mode",
            "remote",
            "--hosts",
            hosts.to_str().unwrap(),
            "--trace",
            remote_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let seq_trace = dir.path().join("seq.trace");
    let out = dms_sim()
        .args([
            "run",
            &case_study(),
            "--mode",
            "seq",
            "--trace",
            seq_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = dms_sim()
        .args([
            "diff",
            seq_trace.to_str().unwrap(),
            remote_trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn partition_prints_the_three_firm_split() {
    let model = example_file("case_study.idef").display().to_string();
    let out = dms_sim().args(["partition", &model, "-k", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lp A: A"), "{text}");
    assert!(text.contains("lp B: B"), "{text}");
    assert!(text.contains("lp C: C"), "{text}");
    assert!(text.contains("cut 3"), "{text}");
}

#[test]
fn partition_maps_lps_onto_hosts_when_given() {
    let model = example_file("case_study.idef").display().to_string();
    let out = dms_sim()
        .args(["partition", &model, "-k", "2", "--hosts", "eng-01:7100,eng-02:7100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("map "), "{text}");
    assert!(text.contains("eng-01:7100"), "{text}");
}

#[test]
fn missing_scenario_file_is_an_io_failure() {
    let out = dms_sim()
        .args(["run", "/nonexistent/nothing.dms", "--mode", "seq"])
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
}
