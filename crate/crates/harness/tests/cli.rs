use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"{
    "model": {"p": 3, "q": 1, "m": 1, "d": 1, "A": [[2.0], [1.5], [0.5]], "B": [[1.0], [1.0]]},
    "levy": {"family": "gamma", "b": 2.0, "a": 1.0},
    "T": 20, "euler_dt": 0.001, "h_list": [0.05], "replications": 3, "seed": 5,
    "estimator": {"kind": "gamma_mle"}
}"#;

fn run(dir: &Path, args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_carma-levy"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .status()
        .unwrap()
        .code()
}

#[test]
fn missing_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["simulate", "--config", "nope.json"]), Some(2));
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let code = run(dir.path(), &["experiment", "consistency", "--config", "c.json", "--threads", "0"]);
    assert_eq!(code, Some(2));
}

#[test]
fn failed_gates_exit_with_4_only_when_checked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    // one coarse h and three replications cannot meet the consistency tolerances
    let base = ["experiment", "consistency", "--config", "c.json", "--out", "o", "--h", "0.5"];
    assert_eq!(run(dir.path(), &base), Some(0));
    let mut checked = base.to_vec();
    checked.push("--check");
    assert_eq!(run(dir.path(), &checked), Some(4));
    assert!(dir.path().join("o/consistency_report.json").exists());
    assert!(dir.path().join("o/consistency_replications.csv").exists());
}

#[test]
fn recover_and_estimate_from_files_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), CONFIG).unwrap();
    let cfg = ["--config", "c.json", "--h", "0.05"];
    let with = |cmd: &str, out: &str, extra: &[&str]| {
        let mut a = vec![cmd];
        a.extend_from_slice(&cfg);
        a.extend_from_slice(&["--out", out]);
        a.extend_from_slice(extra);
        run(d, &a)
    };
    assert_eq!(with("simulate", "sim", &[]), Some(0));
    assert_eq!(with("estimate", "est", &[]), Some(0));
    assert_eq!(with("recover", "rec", &["--input", "sim/series_h0.05.csv"]), Some(0));
    assert_eq!(with("estimate", "refit", &["--input", "rec/increments_h0.05.csv"]), Some(0));

    let pipeline = carma_levy::io::read_increments_csv(&d.join("est/increments_h0.05.csv")).unwrap();
    let from_file = carma_levy::io::read_increments_csv(&d.join("rec/increments_h0.05.csv")).unwrap();
    assert_eq!(pipeline.as_slice(), from_file.as_slice());

    let a = std::fs::read_to_string(d.join("est/result_h0.05.json")).unwrap();
    let b = std::fs::read_to_string(d.join("refit/result_h0.05.json")).unwrap();
    assert_eq!(a, b);
}
