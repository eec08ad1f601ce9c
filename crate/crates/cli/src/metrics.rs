use serde::Serialize;

use crate::error::{CliError, Result};

fn check(pred: &[bool], truth: &[bool]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(CliError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Fraction of positions where `pred` and `truth` agree.
pub fn metric_accuracy(pred: &[bool], truth: &[bool]) -> Result<f64> {
    check(pred, truth)?;
    if pred.is_empty() {
        return Err(CliError::EmptyMetric);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `2TP / (2TP + FP + FN)`, or 0 when there are no positives at all.
pub fn metric_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    check(pred, truth)?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fne;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Boxplot statistics of one metric across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for an empty slice. `sd` uses the `n - 1` denominator and is 0 for
/// a single value.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Summary {
        mean,
        sd,
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    })
}
