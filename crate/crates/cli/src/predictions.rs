//! Per-row target predictions and their six-tag evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use subpop_core::adapt::{classify, Nuisances, TargetPredictor};
use subpop_core::dataset::Dataset;
use subpop_core::synthgen::TruthRow;

use crate::error::{CliError, Result};
use crate::metrics::{metric_accuracy, metric_f1};

pub const PREDICTIONS_HEADER: &str =
    "row_index,a,eta1,eta0,tau0,eta,xi,xi0,xi1,eta1_clamped,xi1_clamped,label_eta,label_xi";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub row_index: usize,
    pub a: u8,
    pub eta1: f64,
    pub eta0: f64,
    pub tau0: f64,
    pub eta: f64,
    pub xi: f64,
    pub xi0: f64,
    pub xi1: f64,
    pub eta1_clamped: bool,
    pub xi1_clamped: bool,
}

/// Score every target row of `ds`; `row_index` is the position in `ds`.
pub fn score_targets<N: Nuisances>(p: &TargetPredictor<N>, ds: &Dataset) -> Vec<PredictionRow> {
    ds.iter()
        .enumerate()
        .filter(|(_, s)| !s.is_source())
        .map(|(i, s)| {
            let pp = p.predict(s.features());
            PredictionRow {
                row_index: i,
                a: s.a(),
                eta1: pp.eta1,
                eta0: pp.eta0,
                tau0: pp.tau0,
                eta: pp.eta,
                xi: pp.xi,
                xi0: pp.xi0,
                xi1: pp.xi1,
                eta1_clamped: pp.eta1_clamped,
                xi1_clamped: pp.xi1_clamped,
            }
        })
        .collect()
}

pub fn predictions_to_csv(rows: &[PredictionRow], threshold: f64) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.row_index,
            r.a,
            r.eta1,
            r.eta0,
            r.tau0,
            r.eta,
            r.xi,
            r.xi0,
            r.xi1,
            r.eta1_clamped as u8,
            r.xi1_clamped as u8,
            classify(r.eta, threshold) as u8,
            classify(r.xi, threshold) as u8,
        );
    }
    out
}

/// Parse a predictions table. The label columns are informational and are
/// only checked for being 0/1.
pub fn parse_predictions_csv(text: &str) -> Result<Vec<PredictionRow>> {
    let bad = |row: usize, message: String| CliError::Format {
        what: "predictions CSV",
        message: format!("line {row}: {message}"),
    };
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let row = idx + 1;
        if line.is_empty() || (idx == 0 && line.starts_with("row_index")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 13 {
            return Err(bad(row, format!("expected 13 columns, found {}", f.len())));
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(row, format!("expected 0 or 1, found {s:?}"))),
        };
        let prob = |s: &str| match s.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
            _ => Err(bad(row, format!("expected a probability, found {s:?}"))),
        };
        let row_index = f[0]
            .parse()
            .map_err(|_| bad(row, format!("bad row index {:?}", f[0])))?;
        flag(f[11])?;
        flag(f[12])?;
        out.push(PredictionRow {
            row_index,
            a: flag(f[1])? as u8,
            eta1: prob(f[2])?,
            eta0: prob(f[3])?,
            tau0: prob(f[4])?,
            eta: prob(f[5])?,
            xi: prob(f[6])?,
            xi0: prob(f[7])?,
            xi1: prob(f[8])?,
            eta1_clamped: flag(f[9])?,
            xi1_clamped: flag(f[10])?,
        });
    }
    Ok(out)
}

/// Method tags: the proposed triple then the naive triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Eta,
    Eta1,
    Eta0,
    Xi,
    Xi1,
    Xi0,
}

impl Tag {
    pub const ALL: [Tag; 6] = [Tag::Eta, Tag::Eta1, Tag::Eta0, Tag::Xi, Tag::Xi1, Tag::Xi0];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Eta => "eta",
            Tag::Eta1 => "eta1",
            Tag::Eta0 => "eta0",
            Tag::Xi => "xi",
            Tag::Xi1 => "xi1",
            Tag::Xi0 => "xi0",
        }
    }

    /// Whether the tag is scored on target rows with background `a`.
    pub fn applies(self, a: u8) -> bool {
        match self {
            Tag::Eta | Tag::Xi => true,
            Tag::Eta1 | Tag::Xi1 => a == 1,
            Tag::Eta0 | Tag::Xi0 => a == 0,
        }
    }

    pub fn prob(self, r: &PredictionRow) -> f64 {
        match self {
            Tag::Eta => r.eta,
            Tag::Eta1 => r.eta1,
            Tag::Eta0 => r.eta0,
            Tag::Xi => r.xi,
            Tag::Xi1 => r.xi1,
            Tag::Xi0 => r.xi0,
        }
    }

    /// `eta` inherits clamping from its `eta1` component.
    pub fn clamped(self, r: &PredictionRow) -> bool {
        match self {
            Tag::Eta | Tag::Eta1 => r.eta1_clamped,
            Tag::Xi1 => r.xi1_clamped,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TagMetrics {
    pub tag: Tag,
    pub n_eval: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub clamp_rate: f64,
}

/// Accuracy, F1 and clamp rate for each tag on its applicable rows.
pub fn evaluate_tags(rows: &[PredictionRow], truth: &[TruthRow], threshold: f64) -> Result<Vec<TagMetrics>> {
    let labels: HashMap<usize, bool> = truth.iter().map(|t| (t.row_index, t.y_true == 1)).collect();
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        let v = labels.get(&r.row_index).ok_or_else(|| CliError::Format {
            what: "truth table",
            message: format!("no label for row {}", r.row_index),
        })?;
        y.push(*v);
    }
    Tag::ALL
        .iter()
        .map(|&tag| {
            let (mut pred, mut truth, mut clamped) = (Vec::new(), Vec::new(), 0usize);
            for (r, &yy) in rows.iter().zip(&y) {
                if tag.applies(r.a) {
                    pred.push(classify(tag.prob(r), threshold));
                    truth.push(yy);
                    clamped += tag.clamped(r) as usize;
                }
            }
            Ok(TagMetrics {
                tag,
                n_eval: pred.len(),
                accuracy: metric_accuracy(&pred, &truth)?,
                f1: metric_f1(&pred, &truth)?,
                clamp_rate: clamped as f64 / pred.len() as f64,
            })
        })
        .collect()
}
