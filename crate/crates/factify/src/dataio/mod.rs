//! Dataset ingestion, image fetching and synthetic dataset generation.

mod fetch;
pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use factify_core::{ClaimDocPair, Label5};
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::text::normalize_text;
use crate::{Error, Result};

pub use fetch::{decode_rgb, FetchError, HttpTransport, ImageFetcher, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

/// Canonical column name → column name in the source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub id: String,
    pub claim: String,
    pub claim_image: String,
    pub document: String,
    pub document_image: String,
    pub category: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "id".into(),
            claim: "claim".into(),
            claim_image: "claim_image".into(),
            document: "document".into(),
            document_image: "document_image".into(),
            category: "category".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    /// 1-based line in the source file (the header is line 1).
    pub line: u64,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub dropped_empty: Vec<RowIssue>,
    pub malformed: Vec<RowIssue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: SplitName,
    pub rows: Vec<ClaimDocPair>,
    pub source_path: PathBuf,
    pub report: LoadReport,
}

impl DatasetManifest {
    /// Every row carries a gold label.
    pub fn is_labeled(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.gold_label.is_some())
    }

    /// Directory that relative image references resolve against.
    pub fn base_dir(&self) -> &Path {
        self.source_path.parent().unwrap_or(Path::new("."))
    }
}

/// Reads a UTF-8, comma-separated CSV with a header row.
///
/// Texts are NFC-normalized and whitespace-collapsed. Rows whose claim or
/// document is empty afterwards are dropped and listed in the report;
/// unparseable rows, duplicate ids and unknown labels are reported as
/// malformed and skipped. The category column may be absent entirely, in
/// which case rows carry no gold label.
pub fn load_split(
    csv_path: &Path,
    split: SplitName,
    columns: &ColumnMap,
) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| csv_error(csv_path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(csv_path, e))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_owned()));
    let id_col = required(&columns.id)?;
    let claim_col = required(&columns.claim)?;
    let claim_img_col = required(&columns.claim_image)?;
    let doc_col = required(&columns.document)?;
    let doc_img_col = required(&columns.document_image)?;
    let cat_col = find(&columns.category);

    let mut rows = Vec::new();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let fallback_line = i as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(fallback_line, |p| p.line());
                report.malformed.push(RowIssue {
                    line,
                    id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(fallback_line, |p| p.line());
        if record.len() != headers.len() {
            report.malformed.push(RowIssue {
                line,
                id: None,
                reason: format!("{} fields, header has {}", record.len(), headers.len()),
            });
            continue;
        }
        let field = |c: usize| record.get(c).unwrap_or_default();
        let id = field(id_col).trim().to_owned();
        let issue = |reason: String| RowIssue {
            line,
            id: (!id.is_empty()).then(|| id.clone()),
            reason,
        };
        if id.is_empty() {
            report.malformed.push(issue("empty id".into()));
            continue;
        }
        if seen.contains(&id) {
            report.malformed.push(issue("duplicate id".into()));
            continue;
        }
        let gold_label = match cat_col.map(|c| field(c).trim()) {
            None | Some("") => None,
            Some(s) => match s.parse::<Label5>() {
                Ok(l) => Some(l),
                Err(e) => {
                    report.malformed.push(issue(e.to_string()));
                    continue;
                }
            },
        };
        let pair = ClaimDocPair {
            id: id.clone(),
            claim_text: normalize_text(field(claim_col)),
            doc_text: normalize_text(field(doc_col)),
            claim_image_ref: field(claim_img_col).trim().to_owned(),
            doc_image_ref: field(doc_img_col).trim().to_owned(),
            gold_label,
        };
        if let Err(e) = pair.validate() {
            report.dropped_empty.push(issue(e.to_string()));
            continue;
        }
        seen.insert(id);
        rows.push(pair);
    }
    for issue in report.malformed.iter().chain(&report.dropped_empty) {
        log::warn!("{}:{}: {}", csv_path.display(), issue.line, issue.reason);
    }
    Ok(DatasetManifest {
        split,
        rows,
        source_path: csv_path.to_owned(),
        report,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Writes rows with the canonical header; unlabeled rows get an empty
/// category.
pub fn write_split(path: &Path, rows: &[ClaimDocPair]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = [
        "id",
        "claim",
        "claim_image",
        "document",
        "document_image",
        "category",
    ];
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            &r.claim_text,
            &r.claim_image_ref,
            &r.doc_text,
            &r.doc_image_ref,
            r.gold_label.map_or("", Label5::as_str),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().at(path)?;
    Ok(())
}
