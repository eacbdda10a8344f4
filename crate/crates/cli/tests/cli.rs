//! Black-box tests of the `qtrack` binary: exit codes, artifacts, overrides,
//! and config validation.

use assert_cmd::Command;
use predicates::prelude::*;
use std::path::Path;

fn qtrack() -> Command {
    Command::cargo_bin("qtrack").unwrap()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn saturate_lorenz_writes_report() {
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["saturate", "--config"])
        .arg(configs().join("lorenz_saturate.json"))
        .arg("--out")
        .arg(out.path())
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["chain"]["saturated"], serde_json::json!(true));
    assert_eq!(report["chain"]["n_X"], serde_json::json!(1));
    assert!(report["meta"]["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn synthesize_writes_control_and_trajectory() {
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["synthesize", "--config"])
        .arg(configs().join("lorenz_circle.json"))
        .arg("--out")
        .arg(out.path())
        .assert()
        .success();
    for file in ["report.json", "control.csv", "trajectory.csv"] {
        assert!(out.path().join(file).exists(), "missing {file}");
    }
    let control = std::fs::read_to_string(out.path().join("control.csv")).unwrap();
    assert!(control.starts_with("t,"), "control.csv header: {}", &control[..20]);
}

#[test]
fn linear_demo_reports_untrackable_direction() {
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["linear-demo", "--config"])
        .arg(configs().join("linear_single_input.json"))
        .arg("--out")
        .arg(out.path())
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["onto"], serde_json::json!(false));
    assert!(report["witness_max_residual"].as_f64().unwrap() <= 1e-8);
    assert!(report["weak_witness_max_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn missing_config_exits_one() {
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["saturate", "--config", "/nonexistent/config.json", "--out"])
        .arg(out.path())
        .assert()
        .failure()
        .code(1)
        .stderr(predicate::str::contains("cannot read config"));
}

#[test]
fn unknown_config_field_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"system": "lorenz", "seed": 1, "typo_field": 3}"#).unwrap();
    qtrack()
        .args(["saturate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(out.path())
        .assert()
        .failure()
        .code(1)
        .stderr(predicate::str::contains("typo_field"));
}

#[test]
fn budget_exhaustion_exits_two_and_writes_report() {
    // an eps far below what the oscillation budget can reach
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tight.json");
    std::fs::write(
        &config,
        r#"{
            "system": "lorenz",
            "target": { "kind": "circle", "center": [1.0, 0.0, 1.0], "radius": 0.3,
                        "turns": 1.0, "axes": [0, 1] },
            "tau": 0.25, "eps": 1e-6, "pieces": 4, "n_osc_start": 4, "n_osc_max": 8,
            "taper_width": 0.01, "grid_steps": 1024, "seed": 3
        }"#,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["synthesize", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(out.path())
        .assert()
        .failure()
        .code(2);
    // the best-effort report is still written for post-mortem inspection
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["succeeded"], serde_json::json!(false));
}

#[test]
fn blow_up_exits_three() {
    // uncontrolled Lorenz-like system with positive feedback blows up fast
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("blow.json");
    std::fs::write(
        &config,
        r#"{
            "system": { "n_x": 1, "n_u": 1, "A": [-5.0], "B": [1.0], "Gamma": [[-2.0]] },
            "x0": [10.0],
            "control": { "kind": "zero" },
            "tau": 5.0,
            "grid_steps": 2000
        }"#,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    qtrack()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(out.path())
        .assert()
        .failure()
        .code(3);
}

#[test]
fn seed_override_changes_report_hash() {
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for (out, seed) in [(&out_a, "7"), (&out_b, "8")] {
        qtrack()
            .args(["saturate", "--config"])
            .arg(configs().join("lorenz_saturate.json"))
            .arg("--out")
            .arg(out.path())
            .args(["--seed", seed])
            .assert()
            .success();
    }
    let read = |d: &tempfile::TempDir| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).unwrap())
            .unwrap()
    };
    let (a, b) = (read(&out_a), read(&out_b));
    assert_ne!(a["meta"]["config_sha256"], b["meta"]["config_sha256"]);
    // both seeds still saturate the Lorenz chain
    assert_eq!(a["chain"]["saturated"], b["chain"]["saturated"]);
}

#[test]
fn same_seed_is_byte_identical() {
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for out in [&out_a, &out_b] {
        qtrack()
            .args(["example00-demo", "--config"])
            .arg(configs().join("example00.json"))
            .arg("--out")
            .arg(out.path())
            .assert()
            .success();
    }
    assert_eq!(
        std::fs::read(out_a.path().join("report.json")).unwrap(),
        std::fs::read(out_b.path().join("report.json")).unwrap()
    );
}
