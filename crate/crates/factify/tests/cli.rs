use std::path::Path;
use std::process::{Command, Output};

fn factify(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factify"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FACTIFY_CACHE")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn malformed_config_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "no_such_field = 1\n").unwrap();
    let out = factify(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(
        code(&out),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_flag_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&factify(&["train", "--frobnicate"], dir.path())),
        Some(1)
    );
}

#[test]
fn missing_column_exits_with_data_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = factify(&["synth", "--per-category", "5", "--out", "."], dir.path());
    assert!(out.status.success());
    std::fs::write(dir.path().join("train.csv"), "id,claim,document\na,x,y\n").unwrap();
    let out = factify(&["train", "--config", "experiment.toml"], dir.path());
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("claim_image"));
}

#[test]
fn train_evaluate_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(factify(
        &["synth", "--per-category", "10", "--seed", "3", "--out", "."],
        dir.path()
    )
    .status
    .success());
    let out = factify(&["train", "--config", "experiment.toml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let run_dir = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .unwrap()
        .to_owned();

    let bundle = format!("{run_dir}/bundle");
    let out = factify(
        &[
            "evaluate",
            "--bundle",
            &bundle,
            "--split",
            "test.csv",
            "--cache",
            "cache",
            "--predictions",
            "p.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ours = std::fs::read(dir.path().join("p.csv")).unwrap();
    let theirs = std::fs::read(dir.path().join(&run_dir).join("predictions-test.csv")).unwrap();
    assert_eq!(ours, theirs);

    let out = factify(&["report", "--run", &run_dir], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("val"));

    let out = factify(
        &["evaluate", "--bundle", "nowhere", "--split", "test.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), Some(2));
}
