//! End-to-end checks of the `bal` binary: exit codes, output files, and
//! byte-identical reruns for a fixed seed and configuration.

use std::path::Path;
use std::process::Command;

fn bal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bal"))
        .args(args)
        .env("BAL_THREADS", "2")
        .output()
        .expect("binary runs")
}

#[test]
fn repro_writes_outputs_and_exits_zero() {
    let dir = std::env::temp_dir().join("bal-cli-ratio");
    let _ = std::fs::remove_dir_all(&dir);
    let out = bal(&[
        "repro",
        "ratio-103",
        "--samples",
        "20000",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "unexpected line in: {stdout}");
    assert!(dir.join("ratio-103.csv").exists() && dir.join("ratio-103.json").exists());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ratio-103.json")).unwrap())
            .unwrap();
    let r = doc["rows"][0]["ratio"].as_f64().unwrap();
    assert!((r - 1.0302).abs() < 1e-3);
}

#[test]
fn reruns_are_byte_identical() {
    let run = |dir: &Path| {
        let out = bal(&[
            "repro",
            "gap-1013",
            "--samples",
            "20000",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        (
            std::fs::read(dir.join("gap-1013.csv")).unwrap(),
            std::fs::read(dir.join("gap-1013.json")).unwrap(),
        )
    };
    let a = std::env::temp_dir().join("bal-cli-det-a");
    let b = std::env::temp_dir().join("bal-cli-det-b");
    assert_eq!(run(&a), run(&b));
}

#[test]
fn assertion_failure_exits_one() {
    let out = bal(&["repro", "ratio-103", "--samples", "0", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn config_errors_exit_two() {
    for args in [
        vec!["repro", "no-such-experiment"],
        vec!["eval", "--mechanism", "allpay", "--dist", "{\"kind\":\"bogus\"}", "--budget", "1"],
        vec!["eval", "--mechanism", "allpay", "--budget", "1"],
        vec!["lp-optimal", "--h", "5", "--budget", "9"],
    ] {
        let out = bal(&args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
    }
}

#[test]
fn eval_reads_dist_from_file() {
    let dir = std::env::temp_dir().join("bal-cli-dist");
    std::fs::create_dir_all(&dir).unwrap();
    let spec = dir.join("spec.json");
    std::fs::write(&spec, r#"{"kind":"uniform","lo":0.0,"hi":2.0}"#).unwrap();
    let out = bal(&[
        "eval",
        "--mechanism",
        "allpay",
        "--dist",
        spec.to_str().unwrap(),
        "--n",
        "2",
        "--budget",
        "0.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval.json")).unwrap()).unwrap();
    // uniform[0,2], n=2, B=0.5: ironing at v'=4B/... known closed form value
    let w = doc["rows"][0]["welfare"].as_f64().unwrap();
    assert!((w - 1.2916666666666667).abs() < 1e-9, "welfare {w}");
}

#[test]
fn jump_lp_subcommand_solves() {
    let out = bal(&[
        "jump-lp", "--supply", "1", "--agents", "3", "--budget", "0.6", "--vlo", "0.5", "--vhi",
        "1.0", "--pi", "0.3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    // infeasible state: k'B/v' < s
    let out = bal(&[
        "jump-lp", "--supply", "1", "--agents", "1", "--budget", "0.3", "--vlo", "0.5", "--vhi",
        "1.0", "--pi", "0.3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
