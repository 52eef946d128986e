use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_COLUMNS: [&str; 10] = [
    "regime",
    "module",
    "lap",
    "epoch",
    "train_loss",
    "penalty",
    "train_acc",
    "val_acc",
    "test_acc",
    "mean_sq_displacement",
];

/// One epoch of one module. `module`, `lap` and `epoch` count from 1; `epoch`
/// runs over all laps of the module.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub regime: String,
    pub module: usize,
    pub lap: usize,
    pub epoch: usize,
    pub train_loss: f64,
    /// Transport term as it entered the objective (0 without regularization).
    pub penalty: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub mean_sq_displacement: f64,
    /// Loss weight at epoch end, multiplier runs only.
    pub lambda: Option<f64>,
}

impl MetricsRow {
    fn scalars(&self) -> [(&'static str, f64); 6] {
        [
            ("train_loss", self.train_loss),
            ("penalty", self.penalty),
            ("train_acc", self.train_acc),
            ("val_acc", self.val_acc),
            ("test_acc", self.test_acc),
            ("mean_sq_displacement", self.mean_sq_displacement),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub rows: Vec<MetricsRow>,
}

/// Which head a trained partition is read out from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadPolicy {
    Last,
    BestByValidation,
}

impl MetricsRecord {
    pub fn modules(&self) -> usize {
        self.rows.iter().map(|r| r.module).max().unwrap_or(0)
    }

    pub fn has_lambda(&self) -> bool {
        self.rows.iter().any(|r| r.lambda.is_some())
    }

    pub fn series(&self, module: usize) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.module == module).collect()
    }

    /// Last recorded row of each module, indexed by `module - 1`.
    pub fn final_rows(&self) -> Vec<&MetricsRow> {
        (1..=self.modules())
            .filter_map(|k| self.rows.iter().filter(|r| r.module == k).max_by_key(|r| r.epoch))
            .collect()
    }

    pub fn final_test_acc(&self) -> Vec<f64> {
        self.final_rows().iter().map(|r| r.test_acc).collect()
    }

    pub fn final_val_acc(&self) -> Vec<f64> {
        self.final_rows().iter().map(|r| r.val_acc).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.scalars().iter().all(|(_, v)| v.is_finite()) && r.lambda.is_none_or(f64::is_finite))
    }

    pub fn to_csv(&self) -> String {
        let lambda = self.has_lambda();
        let mut out = METRICS_COLUMNS.join(",");
        if lambda {
            out.push_str(",lambda");
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{},{}", r.regime, r.module, r.lap, r.epoch).unwrap();
            for (_, v) in r.scalars() {
                write!(out, ",{v:?}").unwrap();
            }
            if lambda {
                write!(out, ",{:?}", r.lambda.unwrap_or(f64::NAN)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let lambda = match header.len() {
            10 => false,
            11 if header[10] == "lambda" => true,
            _ => return Err(Error::Report(format!("unexpected metrics header {header:?}"))),
        };
        if header[..10] != METRICS_COLUMNS {
            return Err(Error::Report(format!("unexpected metrics header {header:?}")));
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |col: &str| Error::Report(format!("metrics row {}: bad {col}", line + 1));
            let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(&header[i]));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&header[i]));
            rows.push(MetricsRow {
                regime: rec[0].to_string(),
                module: int(1)?,
                lap: int(2)?,
                epoch: int(3)?,
                train_loss: float(4)?,
                penalty: float(5)?,
                train_acc: float(6)?,
                val_acc: float(7)?,
                test_acc: float(8)?,
                mean_sq_displacement: float(9)?,
                lambda: if lambda { Some(float(10)?) } else { None },
            });
        }
        Ok(MetricsRecord { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// The module whose head serves predictions: `K` for [`HeadPolicy::Last`],
/// otherwise the module with the highest final validation accuracy (ties go
/// to the shallowest).
pub fn select_head(metrics: &MetricsRecord, policy: HeadPolicy) -> usize {
    match policy {
        HeadPolicy::Last => metrics.modules(),
        HeadPolicy::BestByValidation => argmax_first(&metrics.final_val_acc()) + 1,
    }
}

/// The head with the best final test accuracy; a diagnostic comparable with
/// "best block" reporting, not a selection rule.
pub fn best_head_by_test(metrics: &MetricsRecord) -> usize {
    argmax_first(&metrics.final_test_acc()) + 1
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
