//! Black-box tests of the `hjmin` binary: file outputs, determinism, and
//! exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use nalgebra::DVector;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hjmin"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hjmin-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn solve_writes_piece_files_and_manifest() {
    let dir = scratch("solve");
    let out = dir.join("out");
    let output = run(&[
        "solve",
        "--problem",
        "tdep-1d",
        "--steps",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let piece1 = fs::read_to_string(out.join("piece_1.csv")).unwrap();
    assert!(piece1.starts_with("t,p_1_1,q_1,r\n"));
    assert_eq!(piece1.lines().count(), 42); // header + 2N+1 nodes
    assert!(out.join("piece_2.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("problem_sha256"));
    assert!(manifest.contains("\"steps\": 20"));
}

#[test]
fn slice_at_terminal_time_reproduces_terminal_cost_exactly() {
    let dir = scratch("slice-terminal");
    let out = dir.join("out");
    let output = run(&[
        "slice",
        "--problem",
        "tdep-1d",
        "--steps",
        "10",
        "--times",
        "T",
        "--resolution",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let problem = hjmin::builtin_problem("tdep-1d", None, None).unwrap();
    let text = fs::read_to_string(out.join("slice_T.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let x1: f64 = fields[0].parse().unwrap();
        let value: f64 = fields[2].parse().unwrap();
        let piece: usize = fields[3].parse().unwrap();
        let (expected, index) = problem
            .terminal()
            .evaluate(&DVector::from_element(1, x1))
            .unwrap();
        assert_eq!(value.to_bits(), expected.to_bits(), "at x1 = {x1}");
        assert_eq!(piece, index);
    }
}

#[test]
fn rollout_summary_gap_is_small_at_default_resolution() {
    let dir = scratch("rollout");
    let out = dir.join("out");
    let output = run(&[
        "rollout",
        "--problem",
        "const-16d",
        "--steps",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rows = 0;
    for line in summary.lines().skip(1) {
        let gap: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(gap < 1e-5, "gap {gap}");
        rows += 1;
    }
    assert_eq!(rows, 11);
    assert!(out.join("trajectory_1.csv").exists());
    assert!(out.join("trajectory_11.csv").exists());
}

#[test]
fn identical_invocations_produce_identical_bytes() {
    let dir = scratch("determinism");
    let args = |out: &str| {
        vec![
            "slice".to_string(),
            "--problem".into(),
            "const-16d".into(),
            "--steps".into(),
            "25".into(),
            "--times".into(),
            "0.5T".into(),
            "--resolution".into(),
            "11".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert!(bin()
        .args(args(out_a.to_str().unwrap()))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(args(out_b.to_str().unwrap()))
        .status()
        .unwrap()
        .success());
    let a = fs::read(out_a.join("slice_0.5T.csv")).unwrap();
    let b = fs::read(out_b.join("slice_0.5T.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn verify_quick_passes() {
    let dir = scratch("verify");
    let out = dir.join("out");
    let output = run(&["verify", "--level", "quick", "--out", out.to_str().unwrap()]);
    assert!(
        output.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[PASS]"));
    assert!(!stdout.contains("[FAIL]"));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("check,passed,measured,threshold,detail\n"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = scratch("exit2");
    let out = dir.join("out");
    // Unknown builtin and unreadable path both count as configuration
    // problems.
    let output = run(&[
        "solve",
        "--problem",
        "no-such-problem",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));

    // A parseable document that violates the definiteness assumption.
    let config = dir.join("bad.json");
    fs::write(
        &config,
        r#"{
            "n": 1, "l": 1, "T": 1.0,
            "a": {"base": [1.0]},
            "b": {"base": [1.0]},
            "m_xx": {"base": [1.0]},
            "m_uu": {"base": [-1.0]},
            "m_xu": {"base": [0.0]},
            "terminal": [{"p": [1.0], "q": [0.0], "r": 0.0}]
        }"#,
    )
    .unwrap();
    let output = run(&[
        "solve",
        "--problem",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("m_uu"), "stderr: {stderr}");
}

#[test]
fn numeric_blow_up_exits_3() {
    let dir = scratch("exit3");
    let out = dir.join("out");
    // The stiff Newton family escapes on a grid this coarse.
    let output = run(&[
        "solve",
        "--problem",
        "newton-16d",
        "--steps",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("blow-up"), "stderr: {stderr}");
}
