//! Evaluation and run reports: JSON, text and CSV renderings.

use std::collections::BTreeMap;
use std::path::Path;

use factify_core::metrics::{ConfusionMatrix, EvalReport};
use factify_core::Label5;
use serde::{Deserialize, Serialize};

use crate::bundle::HeadLog;
use crate::cache::CacheStats;
use crate::dataio::{RowIssue, SplitName};
use crate::error::IoContext;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CategoryJson {
    label: String,
    precision: f64,
    recall: f64,
    f1: f64,
    support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfusionJson {
    labels: Vec<String>,
    /// Rows are gold labels, columns predictions.
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalJson {
    split: String,
    n_rows: u64,
    weighted_f1: f64,
    per_category: Vec<CategoryJson>,
    confusion: ConfusionJson,
}

fn labels() -> Vec<String> {
    Label5::ALL.iter().map(|l| l.as_str().to_owned()).collect()
}

/// Pretty JSON with a trailing newline; byte-stable for equal reports.
pub fn eval_to_json(split: SplitName, report: &EvalReport) -> Vec<u8> {
    let doc = EvalJson {
        split: split.to_string(),
        n_rows: report.n_rows,
        weighted_f1: report.weighted_f1,
        per_category: Label5::ALL
            .iter()
            .map(|&l| {
                let c = &report.per_category[l.index()];
                CategoryJson {
                    label: l.as_str().to_owned(),
                    precision: c.precision,
                    recall: c.recall,
                    f1: c.f1,
                    support: c.support,
                }
            })
            .collect(),
        confusion: ConfusionJson {
            labels: labels(),
            counts: report.confusion.counts.iter().map(|r| r.to_vec()).collect(),
        },
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
    out.push(b'\n');
    out
}

/// Rebuilds a report from its JSON form; scores are recomputed from the
/// confusion counts.
pub fn eval_from_json(bytes: &[u8]) -> Result<(String, EvalReport)> {
    let doc: EvalJson =
        serde_json::from_slice(bytes).map_err(|e| Error::Data(format!("eval report: {e}")))?;
    if doc.confusion.labels != labels() || doc.confusion.counts.len() != Label5::COUNT {
        return Err(Error::Data("eval report: unexpected label set".into()));
    }
    let mut confusion = ConfusionMatrix::default();
    for (row, src) in confusion.counts.iter_mut().zip(&doc.confusion.counts) {
        if src.len() != Label5::COUNT {
            return Err(Error::Data("eval report: confusion row width".into()));
        }
        row.copy_from_slice(src);
    }
    Ok((doc.split, EvalReport::from_confusion(confusion)?))
}

/// `id,predicted,gold` with an empty gold for unlabeled rows.
pub fn predictions_csv(rows: &[(String, Label5, Option<Label5>)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "predicted", "gold"])
        .expect("in-memory write");
    for (id, pred, gold) in rows {
        w.write_record([id.as_str(), pred.as_str(), gold.map_or("", Label5::as_str)])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub split: SplitName,
    pub rows: usize,
    pub labeled: bool,
    pub dropped_empty: Vec<RowIssue>,
    pub malformed: Vec<RowIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageFailure {
    pub split: SplitName,
    pub id: String,
    pub side: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Operational record of one run. Unlike the evaluation reports it holds
/// timings and counters, so it is not expected to be byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub config_hash: String,
    pub splits: Vec<SplitSummary>,
    pub image_failures: Vec<ImageFailure>,
    pub encoder_calls: BTreeMap<String, u64>,
    pub cache: CacheStats,
    pub heads: Vec<HeadLog>,
    pub weighted_f1: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub elapsed_ms: u64,
}

impl RunReport {
    pub fn new(config_hash: String) -> Self {
        RunReport {
            status: RunStatus::Ok,
            error: None,
            config_hash,
            splits: Vec::new(),
            image_failures: Vec::new(),
            encoder_calls: BTreeMap::new(),
            cache: CacheStats::default(),
            heads: Vec::new(),
            weighted_f1: BTreeMap::new(),
            notes: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn total_encoder_calls(&self) -> u64 {
        self.encoder_calls.values().sum()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_vec_pretty(self).expect("run report serializes");
        out.push(b'\n');
        std::fs::write(path, out).at(path)
    }
}

/// Text for `factify report`: each split's scores and confusion table.
pub fn render_run(run_dir: &Path) -> Result<String> {
    let mut out = String::new();
    let mut found = false;
    for split in [SplitName::Val, SplitName::Test] {
        let path = run_dir.join(format!("eval-{split}.json"));
        if !path.exists() {
            continue;
        }
        found = true;
        let (name, report) = eval_from_json(&std::fs::read(&path).at(&path)?)?;
        out.push_str(&format!("== {name} ==\n"));
        out.push_str(&report.to_text_table());
        out.push('\n');
    }
    let status = run_dir.join("run_report.json");
    if status.exists() {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&status).at(&status)?)
            .map_err(|e| Error::Data(format!("{}: {e}", status.display())))?;
        if v["status"] == "failed" {
            out.push_str(&format!(
                "run failed: {}\n",
                v["error"].as_str().unwrap_or("unknown error")
            ));
            found = true;
        }
        let failures = v["image_failures"].as_array().map_or(0, Vec::len);
        if failures > 0 {
            out.push_str(&format!(
                "{failures} image fetch/decode failures (image_cosine set to 0)\n"
            ));
        }
    }
    if !found {
        return Err(Error::Data(format!(
            "{}: no evaluation reports found",
            run_dir.display()
        )));
    }
    Ok(out)
}
