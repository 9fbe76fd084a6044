use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cdtk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdtk"))
        .args(args)
        .env("CDTK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_checks_names_every_check() {
    let out = cdtk(&["list-checks"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in cdtk::cli::CHECKS {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn exit_codes() {
    let pass = cdtk(&[
        "run",
        "--check",
        "be",
        "--space",
        "twopoint:q=1",
        "--K",
        "1",
        "--N",
        "2",
    ]);
    assert_eq!(code(&pass), 0, "{}", String::from_utf8_lossy(&pass.stderr));
    let fail = cdtk(&[
        "run",
        "--check",
        "be",
        "--space",
        "twopoint:q=1",
        "--K",
        "1.2",
        "--N",
        "2",
    ]);
    assert_eq!(code(&fail), 1);
    let unknown = cdtk(&["run", "--check", "moonshine"]);
    assert_eq!(code(&unknown), 2);
    let missing = cdtk(&["run", "--check", "evi", "--model", "cos:K=1,N=1"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("x0"));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = cdtk(&[
            "run",
            "--check",
            "cde",
            "--space",
            "model:K=2,N=3",
            "--n",
            "120",
            "--pairs",
            "4",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        runs.push(fs::read(&path).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let report = json(&path);
    assert_eq!(
        report["config"]["seed"],
        Value::from(cdtk::convexity::DEFAULT_SEED)
    );
    assert_eq!(report["config"]["tol"], Value::from(5e-4));
}

#[test]
fn config_file_with_flag_override_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "check = \"evi\"\nmodel = \"cos:K=1,N=1\"\nx0 = 1.2\nT = 1.0\n",
    )
    .unwrap();
    let out_json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let ok = cdtk(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&ok), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("label,margin,tolerance,passed\n"));
    assert_eq!(text.lines().count(), 1 + 41);
    assert_eq!(json(&out_json)["config"]["K"], Value::from(1.0));

    let over = cdtk(&["run", "--config", cfg.to_str().unwrap(), "--K", "1.5"]);
    assert_eq!(code(&over), 1);

    fs::write(&cfg, "check = \"evi\"\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&cdtk(&["run", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn exported_space_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    let exp = cdtk(&[
        "export-space",
        "--space",
        "model:K=2,N=3",
        "--n",
        "300",
        "--out",
        space.to_str().unwrap(),
    ]);
    assert_eq!(code(&exp), 0);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let direct = cdtk(&[
        "run",
        "--check",
        "lichnerowicz",
        "--space",
        "model:K=2,N=3",
        "--n",
        "300",
        "--out",
        a.to_str().unwrap(),
    ]);
    let file_arg = format!("file:{}", space.display());
    let from_file = cdtk(&[
        "run",
        "--check",
        "lichnerowicz",
        "--space",
        &file_arg,
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&direct), 0);
    assert_eq!(
        code(&from_file),
        0,
        "{}",
        String::from_utf8_lossy(&from_file.stderr)
    );
    assert_eq!(json(&a)["details"], json(&b)["details"]);
}

#[test]
fn sweep_crossing_and_no_crossing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let found = cdtk(&[
        "sweep",
        "--check",
        "be",
        "--space",
        "twopoint:q=2",
        "--N",
        "3",
        "--K-range",
        "0,8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&found), 0);
    let k = json(&out)["crossing"].as_f64().unwrap();
    assert!((k - 8.0 / 3.0).abs() <= 1e-4);

    let none = cdtk(&[
        "sweep",
        "--check",
        "be",
        "--space",
        "twopoint:q=2",
        "--N",
        "3",
        "--K-range",
        "0,1",
    ]);
    assert_eq!(code(&none), 1);
    let report: Value = serde_json::from_slice(&none.stdout).unwrap();
    assert!(report["crossing"].is_null());
    assert!(report["status"]
        .as_str()
        .unwrap()
        .starts_with("no crossing"));

    let n_sweep = cdtk(&[
        "sweep",
        "--check",
        "be",
        "--space",
        "twopoint:q=1",
        "--K",
        "1",
        "--N-range",
        "1.1,10",
    ]);
    assert_eq!(code(&n_sweep), 0);
    let report: Value = serde_json::from_slice(&n_sweep.stdout).unwrap();
    assert!((report["crossing"].as_f64().unwrap() - 2.0).abs() <= 1e-4);
}
