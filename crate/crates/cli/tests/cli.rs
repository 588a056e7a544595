use std::path::Path;
use std::process::{Command, Output};

fn qkan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkan"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn qkan")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

const FAST: [&str; 4] = ["--reads", "8", "--sweeps", "200"];

fn write_csv(path: &Path, rows: &[(f64, f64, f64)]) {
    let mut s = String::from("x1,x2,y\n");
    for (a, b, y) in rows {
        s.push_str(&format!("{a},{b},{y}\n"));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn train_writes_model_metrics_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--task",
        "circle",
        "--n-train",
        "300",
        "--n-test",
        "200",
        "--seed",
        "3",
    ];
    args.extend(FAST);
    args.extend([
        "--out",
        "run/model.json",
        "--save-state",
        "state.bin",
        "--export-qubo",
        "q",
    ]);
    let v = stdout_json(&qkan(&args, dir.path()));
    assert!(v["test"]["accuracy"].as_f64().unwrap() > 0.9);
    assert_eq!(v["qubits"], 36);
    for f in [
        "run/model.json",
        "run/metrics.json",
        "run/config.resolved.json",
        "state.bin",
        "q.coo",
        "q.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/config.resolved.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["seed"], 3);
    assert_eq!(resolved["schedule"]["reads"], 8);
    assert_eq!(resolved["shape"], serde_json::json!([2, 1]));
}

#[test]
fn same_seed_same_model() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.json", "b.json"] {
        let mut args = vec![
            "train",
            "--task",
            "reg1",
            "--n-train",
            "200",
            "--n-test",
            "50",
            "--seed",
            "9",
            "--out",
            out,
        ];
        args.extend(FAST);
        assert!(qkan(&args, dir.path()).status.success());
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(&["train", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn invalid_encoding_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(
        &[
            "train",
            "--task",
            "reg1",
            "--low-exp",
            "2",
            "--high-exp",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_data_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(
        &["train", "--train", "nope.csv", "--shape", "2,1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_exact_solve_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(
        &[
            "train",
            "--task",
            "circle",
            "--n-train",
            "50",
            "--n-test",
            "10",
            "--solver",
            "exact",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"task": "reg1", "n_train": 100, "n_test": 20, "seed": 5, "schedule": {"reads": 4, "sweeps": 50}}"#,
    )
    .unwrap();
    let o = qkan(
        &[
            "train", "--config", "c.json", "--reads", "6", "--out", "r/m.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("r/config.resolved.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["schedule"]["reads"], 6);
    assert_eq!(resolved["schedule"]["sweeps"], 50);
    assert_eq!(resolved["schedule"]["seed"], 5);
    assert_eq!(resolved["n_train"], 100);
}

#[test]
fn bad_config_field_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"taks": "reg1"}"#).unwrap();
    assert_eq!(
        qkan(&["train", "--config", "c.json"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn retrain_add_then_remove_restores_counts() {
    let dir = tempfile::tempdir().unwrap();
    let base: Vec<_> = (0..20)
        .map(|i| {
            let x = i as f64 / 20.0 - 0.5;
            let y = (i % 7) as f64 / 7.0 - 0.5;
            (x, y, 0.5 + x + 0.25 * y)
        })
        .collect();
    write_csv(&dir.path().join("a.csv"), &base);
    write_csv(&dir.path().join("b.csv"), &base[..5]);
    let mut args = vec![
        "train",
        "--train",
        "a.csv",
        "--shape",
        "2,1",
        "--degrees",
        "1",
        "--save-state",
        "s.bin",
    ];
    args.extend(FAST);
    assert!(qkan(&args, dir.path()).status.success());

    let mut args = vec![
        "retrain",
        "--state",
        "s.bin",
        "--add",
        "b.csv",
        "--save-state",
        "s2.bin",
    ];
    args.extend(FAST);
    assert_eq!(stdout_json(&qkan(&args, dir.path()))["n_train"], 25);

    let mut args = vec![
        "retrain", "--state", "s2.bin", "--remove", "b.csv", "--test", "a.csv",
    ];
    args.extend(FAST);
    let v = stdout_json(&qkan(&args, dir.path()));
    assert_eq!(v["n_train"], 20);
    assert!(v["test"]["r2"].as_f64().unwrap() > 0.9);

    let o = qkan(
        &[
            "retrain", "--state", "s.bin", "--remove", "a.csv", "--remove", "a.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_state_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--task",
        "reg1",
        "--n-train",
        "50",
        "--n-test",
        "10",
        "--save-state",
        "s.bin",
    ];
    args.extend(FAST);
    assert!(qkan(&args, dir.path()).status.success());
    let p = dir.path().join("s.bin");
    let mut bytes = std::fs::read(&p).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&p, bytes).unwrap();
    let o = qkan(&["retrain", "--state", "s.bin"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inspect_reports_qubits() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--task",
        "reg3",
        "--n-train",
        "50",
        "--n-test",
        "10",
        "--reads",
        "1",
        "--sweeps",
        "10",
    ];
    args.extend(["--out", "m.json", "--save-state", "s.bin"]);
    assert!(qkan(&args, dir.path()).status.success());
    let model = qkan(&["inspect", "m.json"], dir.path());
    let state = qkan(&["inspect", "s.bin"], dir.path());
    let grab = |o: &Output| {
        let text = String::from_utf8_lossy(&o.stdout).to_string();
        text.lines()
            .find(|l| l.trim_start().starts_with("qubits"))
            .map(|l| l.to_string())
            .unwrap()
    };
    assert_eq!(grab(&model), grab(&state));
    assert!(grab(&model).ends_with("246"));
}

#[test]
fn eval_scores_a_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--task",
        "circle",
        "--n-train",
        "200",
        "--n-test",
        "10",
        "--seed",
        "1",
        "--out",
        "m.json",
    ];
    args.extend(FAST);
    assert!(qkan(&args, dir.path()).status.success());
    let v = stdout_json(&qkan(
        &[
            "eval", "--model", "m.json", "--task", "circle", "--seed", "8", "--n-test", "100",
        ],
        dir.path(),
    ));
    assert!(v["accuracy"].as_f64().unwrap() > 0.9);
}

#[test]
fn bench_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "bench",
        "run",
        "--task",
        "moons",
        "--n-train",
        "200",
        "--n-test",
        "100",
        "--reads",
        "5",
        "--sweeps",
        "100",
        "--steps",
        "20",
        "--arms",
        "sa,sgd",
        "--seed",
        "2",
        "--out",
        "b",
    ];
    let o = qkan(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "metrics.csv", "config.resolved.json"] {
        assert!(dir.path().join("b").join(f).exists(), "{f} missing");
    }
}

#[test]
fn bench_run_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(
        &["bench", "run", "--task", "moons", "--out", "b"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}
