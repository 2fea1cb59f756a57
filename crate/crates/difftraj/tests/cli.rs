//! Integration tests for the `difftraj` binary: exit-code contract,
//! artifact round trips, and manifest determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_difftraj"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn difftraj")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["plan", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    // No subcommand, unknown subcommand, missing required argument, and a
    // malformed value all count as usage errors.
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["gen-data"])), 1);
    assert_eq!(code(&run(&["train", "--data", "x.bin"])), 1);
    let out = run(&[
        "plan",
        "--ckpt",
        "m.ckpt",
        "--scene",
        "toy-static",
        "--start",
        "not-a-pose",
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
}

#[test]
fn unknown_scene_is_a_usage_error() {
    let out = run(&[
        "gen-data",
        "--scene",
        "no-such-scene",
        "--out",
        "/tmp/never-written.bin",
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(!Path::new("/tmp/never-written.bin").exists());
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = run(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("m.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    let out = run(&[
        "plan",
        "--ckpt",
        dir.path().join("missing.ckpt").to_str().unwrap(),
        "--scene",
        "toy-static",
        "--start",
        "1.0,1.0,0.0",
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // Corrupt dataset bytes are a data error, not a crash.
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a dataset").unwrap();
    let out = run(&[
        "train",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("m.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

/// One shared end-to-end pass: gen-data, train, plan, eval, plot. Grouped in
/// a single test so the expensive MPC rollouts run once.
#[test]
fn pipeline_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();

    // gen-data twice with identical arguments: byte-identical artifacts.
    for name in ["a.bin", "b.bin"] {
        let out = run(&[
            "gen-data",
            "--scene",
            "toy-static",
            "--starts",
            "3",
            "--seed",
            "4",
            "--out",
            &p(name),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let data_a = std::fs::read(p("a.bin")).unwrap();
    let data_b = std::fs::read(p("b.bin")).unwrap();
    assert!(!data_a.is_empty());
    assert_eq!(data_a, data_b, "datasets must be reproducible");
    assert_eq!(
        std::fs::read(p("a.bin.manifest.json")).unwrap(),
        std::fs::read(p("b.bin.manifest.json")).unwrap(),
        "manifests must not embed timestamps or other run-varying state"
    );

    // train twice: byte-identical checkpoints.
    for name in ["m1.ckpt", "m2.ckpt"] {
        let out = run(&[
            "train",
            "--data",
            &p("a.bin"),
            "--out",
            &p(name),
            "--steps",
            "30",
            "--channels",
            "8",
            "--seed",
            "9",
            "--scene",
            "toy-static",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(p("m1.ckpt")).unwrap(),
        std::fs::read(p("m2.ckpt")).unwrap(),
        "training must be deterministic"
    );

    // A 30-step model samples noise; with the filter on, every candidate
    // fails the yaw gate and the planner reports an empty plan: exit 3.
    let out = run(&[
        "plan",
        "--ckpt",
        &p("m1.ckpt"),
        "--scene",
        "toy-static",
        "--start",
        "1.0,1.0,0.8",
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("empty plan"));

    // Bypassing the filter returns the first sample: exit 0 plus artifacts.
    let out = run(&[
        "plan",
        "--ckpt",
        &p("m1.ckpt"),
        "--scene",
        "toy-static",
        "--start",
        "1.0,1.0,0.8",
        "--no-filter",
        "--out",
        &p("plan.json"),
        "--svg",
        &p("plan.svg"),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let traj: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("plan.json")).unwrap()).unwrap();
    assert_eq!(traj["poses"].as_array().unwrap().len(), 128);
    assert!(Path::new(&p("plan.json.manifest.json")).exists());
    assert!(std::fs::read_to_string(p("plan.svg"))
        .unwrap()
        .starts_with("<svg"));

    // Unfiltered eval over a few held-out starts: exit 0 and a report whose
    // failure rate is zero by construction (every plan returns a sample).
    let out = run(&[
        "eval",
        "--ckpt",
        &p("m1.ckpt"),
        "--scene",
        "toy-static",
        "--starts",
        "3",
        "--seed",
        "2",
        "--no-filter",
        "--report",
        &p("report.json"),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_runs"].as_u64(), Some(3));
    assert_eq!(report["f_rate"].as_f64(), Some(0.0));

    // plot consumes the planned trajectory and the report.
    let out = run(&[
        "plot",
        "--scene",
        "toy-static",
        "--traj",
        &p("plan.json"),
        "--report",
        &p("report.json"),
        "--out",
        &p("scene.svg"),
        "--velocity",
        &p("vel.svg"),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(std::fs::metadata(p("scene.svg")).unwrap().len() > 0);
    assert!(std::fs::metadata(p("vel.svg")).unwrap().len() > 0);
}
