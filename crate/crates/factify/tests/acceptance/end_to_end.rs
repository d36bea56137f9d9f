//! Criteria that drive the built binary end to end on synthetic data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde_json::Value;

use crate::Outcome;

const BIN: &str = env!("CARGO_BIN_EXE_factify");

pub struct Workspace {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }
}

fn run(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("FACTIFY_CACHE")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if out.status.success() {
        Ok(stdout)
    } else {
        Err(format!(
            "factify {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn synth(out: &Path, per_category: usize, seed: u64, text_only: bool) -> Result<PathBuf, String> {
    let (pc, s) = (per_category.to_string(), seed.to_string());
    let mut args = vec![
        "synth",
        "--per-category",
        &pc,
        "--seed",
        &s,
        "--out",
        out.to_str().unwrap(),
    ];
    if text_only {
        args.push("--text-only");
    }
    run(&args)?;
    Ok(out.join("experiment.toml"))
}

/// Trains and returns the run directory printed by the CLI.
fn train(config: &Path) -> Result<PathBuf, String> {
    let stdout = run(&["train", "--config", config.to_str().unwrap()])?;
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .map(PathBuf::from)
        .ok_or_else(|| format!("no run directory in output: {stdout}"))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn val_f1(run_dir: &Path) -> Result<f64, String> {
    read_json(&run_dir.join("eval-val.json"))?["weighted_f1"]
        .as_f64()
        .ok_or_else(|| "eval-val.json has no weighted_f1".into())
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        out.insert(
            name,
            std::fs::read(entry.path()).map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

fn edit_config(src: &Path, dst: &Path, edit: impl FnOnce(&mut toml::Table)) -> Result<(), String> {
    let text = std::fs::read_to_string(src).map_err(|e| e.to_string())?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| e.to_string())?;
    edit(&mut table);
    std::fs::write(dst, toml::to_string(&table).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())
}

fn total_encoder_calls(report: &Value) -> u64 {
    report["encoder_calls"]
        .as_object()
        .map(|m| m.values().filter_map(Value::as_u64).sum())
        .unwrap_or(u64::MAX)
}

pub fn synthetic_pipeline(ws: &Workspace) -> Outcome {
    match synthetic_pipeline_inner(ws) {
        Ok(o) => o,
        Err(e) => Outcome::fail(e),
    }
}

fn synthetic_pipeline_inner(ws: &Workspace) -> Result<Outcome, String> {
    let data = ws.root.join("synth");
    let config = synth(&data, 100, 42, false)?;
    let start = Instant::now();
    let run_dir = train(&config)?;
    let secs = start.elapsed().as_secs_f64();
    let f1 = val_f1(&run_dir)?;

    let first_bundle = dir_bytes(&run_dir.join("bundle"))?;
    let first_val = std::fs::read(run_dir.join("eval-val.json")).map_err(|e| e.to_string())?;
    let first_test = std::fs::read(run_dir.join("eval-test.json")).map_err(|e| e.to_string())?;
    let again = train(&config)?;
    let identical = again == run_dir
        && dir_bytes(&again.join("bundle"))? == first_bundle
        && std::fs::read(again.join("eval-val.json")).map_err(|e| e.to_string())? == first_val
        && std::fs::read(again.join("eval-test.json")).map_err(|e| e.to_string())? == first_test;
    let warm_calls = total_encoder_calls(&read_json(&again.join("run_report.json"))?);

    // Text carries no signal when only the image cosine is used and images
    // are unrelated to the label.
    let text_only = ws.root.join("text-only");
    let base = synth(&text_only, 100, 42, true)?;
    let restricted = text_only.join("image-only.toml");
    edit_config(&base, &restricted, |t| {
        t.insert(
            "feature_flags".into(),
            toml::Value::Array(vec!["image_cosine".into()]),
        );
        t.insert("head_variant".into(), "none".into());
    })?;
    let control = val_f1(&train(&restricted)?)?;

    Ok(Outcome::check(
        f1 >= 0.95 && secs < 120.0 && identical && warm_calls == 0 && control <= 0.35,
        format!(
            "val wF1 {f1:.4} in {secs:.1}s; rerun byte-identical: {identical}; warm encoder calls {warm_calls}; image-only control wF1 {control:.4}"
        ),
    ))
}

pub fn ablation_grid(ws: &Workspace) -> Outcome {
    match ablation_grid_inner(ws) {
        Ok(o) => o,
        Err(e) => Outcome::fail(e),
    }
}

fn ablation_grid_inner(ws: &Workspace) -> Result<Outcome, String> {
    let data = ws.root.join("grid");
    let config = synth(&data, 100, 42, false)?;
    let stdout = run(&[
        "grid",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "table4",
    ])?;
    let path = stdout
        .lines()
        .find_map(|l| l.strip_prefix("written to "))
        .ok_or("grid did not report its output file")?;
    let table = read_json(Path::new(path))?;
    let rows = table["rows"].as_array().ok_or("grid json has no rows")?;
    let mut scores = Vec::new();
    for r in rows {
        let name = r["name"].as_str().unwrap_or("?").to_owned();
        let f1 = r["val_weighted_f1"]
            .as_f64()
            .ok_or_else(|| format!("variant {name} failed: {}", r["error"]))?;
        scores.push((name, f1));
    }
    let target = scores
        .iter()
        .find(|(n, _)| n == "without-image-cosine")
        .ok_or("missing variant")?
        .1;
    let strictly_lowest = scores
        .iter()
        .filter(|(n, _)| n != "without-image-cosine")
        .all(|(_, f)| *f > target);
    let summary: Vec<String> = scores.iter().map(|(n, f)| format!("{n} {f:.4}")).collect();
    Ok(Outcome::check(strictly_lowest, summary.join(", ")))
}

pub fn label_blind(ws: &Workspace) -> Outcome {
    match label_blind_inner(ws) {
        Ok(o) => o,
        Err(e) => Outcome::fail(e),
    }
}

fn strip_category(src: &Path, dst: &Path) -> Result<(), String> {
    let mut reader = csv::Reader::from_path(src).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| &headers[i] != "category")
        .collect();
    let mut writer = csv::Writer::from_path(dst).map_err(|e| e.to_string())?;
    writer
        .write_record(keep.iter().map(|&i| &headers[i]))
        .map_err(|e| e.to_string())?;
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        writer
            .write_record(keep.iter().map(|&i| &rec[i]))
            .map_err(|e| e.to_string())?;
    }
    writer.flush().map_err(|e| e.to_string())
}

fn label_blind_inner(ws: &Workspace) -> Result<Outcome, String> {
    let data = ws.root.join("blind");
    let config = synth(&data, 100, 42, false)?;
    let labeled = train(&config)?;

    strip_category(&data.join("val.csv"), &data.join("val-unlabeled.csv"))?;
    strip_category(&data.join("test.csv"), &data.join("test-unlabeled.csv"))?;
    let blind_cfg = data.join("blind.toml");
    edit_config(&config, &blind_cfg, |t| {
        let ds = t
            .get_mut("dataset")
            .and_then(toml::Value::as_table_mut)
            .expect("dataset table");
        ds.insert("val".into(), "val-unlabeled.csv".into());
        ds.insert("test".into(), "test-unlabeled.csv".into());
    })?;
    let blind = train(&blind_cfg)?;
    let distinct_runs = blind != labeled;
    let a = dir_bytes(&labeled.join("bundle"))?;
    let b = dir_bytes(&blind.join("bundle"))?;
    let differing: Vec<&String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .collect();
    let no_eval = !blind.join("eval-val.json").exists();
    Ok(Outcome::check(
        distinct_runs && differing.is_empty() && no_eval,
        format!(
            "{} bundle files compared, differing: {:?}; unlabeled run wrote no eval file: {no_eval}",
            a.len(),
            differing
        ),
    ))
}

pub const REAL_CONFIG_ENV: &str = "FACTIFY_REAL_CONFIG";
pub const REAL_BASELINE_ENV: &str = "FACTIFY_REAL_BASELINE_CONFIG";

pub fn real_data() -> Outcome {
    let (Some(full), Some(baseline)) = (
        std::env::var_os(REAL_CONFIG_ENV),
        std::env::var_os(REAL_BASELINE_ENV),
    ) else {
        return Outcome::skip(format!(
            "not runnable here: needs the real dataset and pretrained encoders; set {REAL_CONFIG_ENV} and {REAL_BASELINE_ENV}"
        ));
    };
    let score = |cfg: &Path| -> Result<f64, String> { val_f1(&train(cfg)?) };
    match (score(Path::new(&full)), score(Path::new(&baseline))) {
        (Ok(f), Ok(b)) => Outcome::check(
            (f - 0.8078).abs() <= 0.05 && (b - 0.6664).abs() <= 0.05,
            format!("full wF1 {f:.4} (target 0.8078 ± 0.05), baseline wF1 {b:.4} (target 0.6664 ± 0.05)"),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::fail(e),
    }
}
