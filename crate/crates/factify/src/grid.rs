//! Named experiment grids: each variant is a delta on a base config, run
//! independently and compared by validation weighted F1.

use std::fmt::Write as _;
use std::str::FromStr;

use factify_core::features::FeatureFamily;
use factify_core::mlp::HeadVariant;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::pipeline::run_experiment;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridName {
    /// Text backend × image backend, cosine features only.
    Table2,
    /// The four head variants.
    Table3,
    /// Full feature set, then each family dropped in turn.
    Table4,
}

impl GridName {
    pub fn as_str(self) -> &'static str {
        match self {
            GridName::Table2 => "table2",
            GridName::Table3 => "table3",
            GridName::Table4 => "table4",
        }
    }
}

impl FromStr for GridName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table2" => Ok(GridName::Table2),
            "table3" => Ok(GridName::Table3),
            "table4" => Ok(GridName::Table4),
            _ => Err(Error::Config(format!(
                "unknown grid {s:?}; expected table2, table3 or table4"
            ))),
        }
    }
}

pub const TEXT_BACKENDS: [&str; 4] = ["sentence-text", "simcse-text", "roberta-text", "clip-text"];
pub const IMAGE_BACKENDS: [&str; 2] = ["resnet-image", "clip-image"];

/// A named config.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: ExperimentConfig,
}

pub fn variants(base: &ExperimentConfig, grid: GridName) -> Vec<Variant> {
    let mut out = Vec::new();
    match grid {
        GridName::Table2 => {
            for text in TEXT_BACKENDS {
                for image in IMAGE_BACKENDS {
                    let mut c = base.clone();
                    c.text_backend = text.into();
                    c.image_backend = image.into();
                    c.feature_flags = [FeatureFamily::TextCosine, FeatureFamily::ImageCosine]
                        .into_iter()
                        .collect();
                    out.push(Variant {
                        name: format!("{text}+{image}"),
                        config: c,
                    });
                }
            }
        }
        GridName::Table3 => {
            for v in HeadVariant::ALL {
                let mut c = base.clone();
                c.head_variant = Some(v);
                c.feature_flags = c.feature_flags.with(FeatureFamily::Head);
                out.push(Variant {
                    name: v.as_str().into(),
                    config: c,
                });
            }
        }
        GridName::Table4 => {
            out.push(Variant {
                name: "full".into(),
                config: base.clone(),
            });
            for f in FeatureFamily::ALL {
                let mut c = base.clone();
                c.feature_flags = c.feature_flags.without(f);
                out.push(Variant {
                    name: format!("without-{}", f.as_str().replace('_', "-")),
                    config: c,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub name: String,
    pub val_weighted_f1: Option<f64>,
    pub error: Option<String>,
    pub run_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTable {
    pub grid: String,
    /// Best first; failed variants last.
    pub rows: Vec<GridRow>,
}

impl GridTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let _ = writeln!(s, "{:<width$}  {:>9}", "variant", "val_wF1");
        for r in &self.rows {
            match (r.val_weighted_f1, &r.error) {
                (Some(f), _) => {
                    let _ = writeln!(s, "{:<width$}  {f:>9.4}", r.name);
                }
                (None, Some(e)) => {
                    let _ = writeln!(s, "{:<width$}  {:>9}  {e}", r.name, "error");
                }
                (None, None) => {
                    let _ = writeln!(s, "{:<width$}  {:>9}", r.name, "n/a");
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("grid serializes");
        v.push(b'\n');
        v
    }

    pub fn get(&self, name: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Runs every variant; a failing variant becomes an error row instead of
/// aborting the grid.
pub fn run_variants(grid: &str, variants: Vec<Variant>) -> Result<GridTable> {
    if variants.is_empty() {
        return Err(Error::Config(format!("grid {grid:?} has no variants")));
    }
    let mut rows: Vec<GridRow> = variants
        .into_iter()
        .map(|v| {
            log::info!("grid {grid}: running {}", v.name);
            match run_experiment(&v.config) {
                Ok(o) => GridRow {
                    name: v.name,
                    val_weighted_f1: o.val.map(|r| r.weighted_f1),
                    error: None,
                    run_dir: Some(o.run_dir.display().to_string()),
                },
                Err(e) => GridRow {
                    name: v.name,
                    val_weighted_f1: None,
                    error: Some(e.to_string()),
                    run_dir: None,
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &GridRow| r.val_weighted_f1.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.name.cmp(&b.name))
    });
    Ok(GridTable {
        grid: grid.to_owned(),
        rows,
    })
}

pub fn run_grid(base: &ExperimentConfig, grid: GridName) -> Result<GridTable> {
    run_variants(grid.as_str(), variants(base, grid))
}
