//! Label-shift importance weights on the a=0 background and plug-in risk
//! estimates for the target domain.

use serde::{Deserialize, Serialize};

use crate::adapt::classify;
use crate::classify::{fit_logistic, FitOptions, ProbModel, Probability};
use crate::dataset::Dataset;
use crate::error::EstimationError;
use crate::proportions::{SourceProportions, TargetProportions};

/// `w(y) = pr(y | R=0, A=0) / pr(y | R=1, A=0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWeights {
    pub w1: f64,
    pub w0: f64,
}

impl LabelWeights {
    pub fn get(&self, y: u8) -> f64 {
        if y == 1 {
            self.w1
        } else {
            self.w0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Misclassification at the 0.5 threshold.
    ZeroOne,
    /// Negative log-likelihood of the predicted probability.
    Logistic,
}

impl Loss {
    pub fn eval(&self, p: f64, y: u8) -> f64 {
        match self {
            Loss::ZeroOne => (classify(p, 0.5) != (y == 1)) as u8 as f64,
            Loss::Logistic => {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                if y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            }
        }
    }
}

pub fn label_weights(sp: &SourceProportions, tp: &TargetProportions) -> Result<LabelWeights, EstimationError> {
    let land_src = sp.alpha00 + sp.alpha10;
    let land_tgt = tp.beta00 + tp.beta10;
    if !(sp.alpha10 > 0.0 && sp.alpha00 > 0.0 && land_tgt > 0.0) {
        return Err(EstimationError::Invariant(
            "label weights need alpha10, alpha00 and beta10 + beta00 positive".into(),
        ));
    }
    Ok(LabelWeights {
        w1: tp.beta10 * land_src / (sp.alpha10 * land_tgt),
        w0: tp.beta00 * land_src / (sp.alpha00 * land_tgt),
    })
}

fn require(ds: &Dataset, name: &'static str) -> Result<(), EstimationError> {
    if ds.is_empty() {
        Err(EstimationError::EmptyCell(name))
    } else {
        Ok(())
    }
}

/// Weighted source a=0 risk: the plug-in estimate of the target a=0 risk.
pub fn weighted_risk<H: Probability + ?Sized>(
    h: &H,
    loss: Loss,
    source_a0: &Dataset,
    w: &LabelWeights,
) -> Result<f64, EstimationError> {
    require(source_a0, "source a=0")?;
    let mut total = 0.0;
    for s in source_a0 {
        let y = s.y().ok_or(EstimationError::EmptyCell("labeled source a=0"))?;
        total += loss.eval(h.prob(s.features()), y) * w.get(y);
    }
    Ok(total / source_a0.len() as f64)
}

/// The two empirical expectations making up the a=1 risk.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WaterTerms {
    /// Mean of `l(h, 1)` over target a=1.
    positive: f64,
    /// Mean of `l(h, 1) - l(h, 0)` over source `(y=0, a=1)`.
    correction: f64,
}

fn water_terms<H: Probability + ?Sized>(
    h: &H,
    loss: Loss,
    source_a1_y0: &Dataset,
    target_a1: &Dataset,
) -> Result<WaterTerms, EstimationError> {
    require(source_a1_y0, "source (y=0, a=1)")?;
    require(target_a1, "target a=1")?;
    let positive = target_a1
        .iter()
        .map(|s| loss.eval(h.prob(s.features()), 1))
        .sum::<f64>()
        / target_a1.len() as f64;
    let correction = source_a1_y0
        .iter()
        .map(|s| {
            let p = h.prob(s.features());
            loss.eval(p, 1) - loss.eval(p, 0)
        })
        .sum::<f64>()
        / source_a1_y0.len() as f64;
    Ok(WaterTerms {
        positive,
        correction,
    })
}

/// Target a=1 risk from unlabeled target a=1 rows and labeled source
/// `(y=0, a=1)` rows.
pub fn risk_a1<H: Probability + ?Sized>(
    h: &H,
    loss: Loss,
    source_a1_y0: &Dataset,
    target_a1: &Dataset,
    tp: &TargetProportions,
) -> Result<f64, EstimationError> {
    let water = tp.beta01 + tp.beta11;
    if water.is_nan() || water <= 0.0 {
        return Err(EstimationError::Invariant("beta01 + beta11 must be positive".into()));
    }
    let t = water_terms(h, loss, source_a1_y0, target_a1)?;
    Ok(t.positive - t.correction * tp.beta01 / water)
}

/// Subsets needed by the risk estimators.
#[derive(Debug, Clone, Copy)]
pub struct RiskData<'a> {
    pub source_a0: &'a Dataset,
    pub source_a1_y0: &'a Dataset,
    pub target_a1: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk_a0_weighted: f64,
    pub risk_a1: f64,
    pub risk_overall: f64,
    pub weights: LabelWeights,
    pub loss: Loss,
}

/// Overall target risk combining both backgrounds. When the target has no
/// water mass the a=1 terms are dropped and the a=1 subsets may be empty.
pub fn risk_overall<H: Probability + ?Sized>(
    h: &H,
    loss: Loss,
    data: RiskData<'_>,
    sp: &SourceProportions,
    tp: &TargetProportions,
) -> Result<RiskReport, EstimationError> {
    let w = label_weights(sp, tp)?;
    let a0 = weighted_risk(h, loss, data.source_a0, &w)?;
    let water = tp.beta01 + tp.beta11;
    let (a1, overall) = if water > 0.0 {
        let t = water_terms(h, loss, data.source_a1_y0, data.target_a1)?;
        let a1 = t.positive - t.correction * tp.beta01 / water;
        let overall = a0 * (tp.beta10 + tp.beta00) + t.positive * water - t.correction * tp.beta01;
        (a1, overall)
    } else {
        (f64::NAN, a0 * (tp.beta10 + tp.beta00))
    };
    Ok(RiskReport {
        risk_a0_weighted: a0,
        risk_a1: a1,
        risk_overall: overall,
        weights: w,
        loss,
    })
}

/// Logistic fit on source a=0 rows with per-row weights `w(y_i)`.
pub fn reweighted_erm(
    source_a0: &Dataset,
    w: &LabelWeights,
    opts: &FitOptions,
) -> Result<ProbModel, EstimationError> {
    require(source_a0, "source a=0")?;
    let rows = source_a0.rows();
    let mut labels = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for s in source_a0 {
        let y = s.y().ok_or(EstimationError::EmptyCell("labeled source a=0"))?;
        labels.push(y == 1);
        weights.push(w.get(y));
    }
    fit_logistic(&rows, &labels, Some(&weights), opts).map_err(|source| EstimationError::Fit {
        model: "reweighted_erm",
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::error::FitError;
    use approx::assert_abs_diff_eq;

    fn sp(alpha10: f64, alpha00: f64) -> SourceProportions {
        SourceProportions::new(alpha10, 1.0 - alpha10 - alpha00, alpha00, 0.5).unwrap()
    }

    fn tp(beta10: f64, beta00: f64, beta01: f64) -> TargetProportions {
        TargetProportions::from_parts(beta10, beta00, beta01, 0.5).unwrap()
    }

    #[test]
    fn label_weight_examples() {
        let w = label_weights(&sp(0.2, 0.2), &tp(0.3, 0.3, 0.2)).unwrap();
        assert_abs_diff_eq!(w.w1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w0, 1.0, epsilon = 1e-15);

        let w = label_weights(&sp(1.0 / 3.0, 1.0 / 3.0), &tp(0.25, 0.25, 0.25)).unwrap();
        assert_abs_diff_eq!(w.w1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w0, 1.0, epsilon = 1e-15);

        let w = label_weights(&sp(0.3, 0.2), &tp(0.25, 0.25, 0.25)).unwrap();
        assert_abs_diff_eq!(w.w1, 5.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w0, 5.0 / 4.0, epsilon = 1e-15);
    }

    fn land() -> Dataset {
        Dataset::new(
            1,
            vec![
                Sample::source(vec![2.0], true, false),
                Sample::source(vec![1.0], true, false),
                Sample::source(vec![-1.0], false, false),
                Sample::source(vec![0.5], false, false),
                Sample::source(vec![-2.0], false, false),
            ],
        )
        .unwrap()
    }

    fn step(x: &[f64]) -> f64 {
        if x[0] > 0.0 {
            0.9
        } else {
            0.1
        }
    }

    #[test]
    fn weighted_risk_examples() {
        let one = LabelWeights { w1: 1.0, w0: 1.0 };
        // one error (x=0.5, y=0) out of five
        assert_abs_diff_eq!(weighted_risk(&step, Loss::ZeroOne, &land(), &one).unwrap(), 0.2);

        let perfect = |x: &[f64]| if x[0] > 0.75 { 1.0 } else { 0.0 };
        let w = LabelWeights { w1: 3.0, w0: 0.2 };
        assert_eq!(weighted_risk(&perfect, Loss::ZeroOne, &land(), &w).unwrap(), 0.0);

        let always = |_: &[f64]| 1.0;
        assert_abs_diff_eq!(
            weighted_risk(&always, Loss::ZeroOne, &land(), &w).unwrap(),
            0.2 * 3.0 / 5.0,
            epsilon = 1e-15
        );
        assert!(weighted_risk(&always, Loss::ZeroOne, &Dataset::empty(1), &w).is_err());
    }

    fn water() -> (Dataset, Dataset) {
        let src = Dataset::new(
            1,
            vec![Sample::source(vec![-1.0], false, true), Sample::source(vec![1.0], false, true)],
        )
        .unwrap();
        let tgt = Dataset::new(
            1,
            vec![
                Sample::target(vec![-1.0], true),
                Sample::target(vec![2.0], true),
                Sample::target(vec![3.0], true),
            ],
        )
        .unwrap();
        (src, tgt)
    }

    #[test]
    fn risk_a1_examples() {
        let (src, tgt) = water();
        // beta01 = 0: only the target term remains
        let t = tp(0.25, 0.25, 0.0);
        let r = risk_a1(&step, Loss::ZeroOne, &src, &tgt, &t).unwrap();
        assert_abs_diff_eq!(r, 1.0 / 3.0, epsilon = 1e-15);

        // constant-1 predictor: l(h,1) = 0, l(h,0) = 1
        let always = |_: &[f64]| 1.0;
        let t = tp(0.25, 0.25, 0.2);
        let r = risk_a1(&always, Loss::ZeroOne, &src, &tgt, &t).unwrap();
        assert_abs_diff_eq!(r, 0.2 / 0.5, epsilon = 1e-15);

        // a loss blind to the label gives no correction: with logistic loss
        // and p = 0.5, l(h,1) = l(h,0)
        let half = |_: &[f64]| 0.5;
        let r = risk_a1(&half, Loss::Logistic, &src, &tgt, &t).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::LN_2, epsilon = 1e-15);

        assert!(risk_a1(&half, Loss::Logistic, &Dataset::empty(1), &tgt, &t).is_err());
    }

    #[test]
    fn overall_without_water_mass_equals_weighted_risk() {
        let s = sp(0.3, 0.2);
        let t = TargetProportions::from_parts(0.4, 0.6, 0.0, 0.6).unwrap();
        let empty = Dataset::empty(1);
        let data = RiskData {
            source_a0: &land(),
            source_a1_y0: &empty,
            target_a1: &empty,
        };
        let rep = risk_overall(&step, Loss::ZeroOne, data, &s, &t).unwrap();
        assert_eq!(rep.risk_overall, rep.risk_a0_weighted);
    }

    #[test]
    fn reweighted_erm_examples() {
        let ds = land();
        let opts = FitOptions::with_lambda(0.1);
        let plain = fit_logistic(
            &ds.rows(),
            &ds.iter().map(|s| s.y() == Some(1)).collect::<Vec<_>>(),
            None,
            &opts,
        )
        .unwrap();
        let unit = reweighted_erm(&ds, &LabelWeights { w1: 1.0, w0: 1.0 }, &opts).unwrap();
        assert_abs_diff_eq!(plain.intercept, unit.intercept, epsilon = 1e-8);
        assert_abs_diff_eq!(plain.weights[0], unit.weights[0], epsilon = 1e-8);

        let up = reweighted_erm(&ds, &LabelWeights { w1: 10.0, w0: 1.0 }, &opts).unwrap();
        assert!(up.intercept > plain.intercept);

        let err = reweighted_erm(&ds, &LabelWeights { w1: 0.0, w0: 1.0 }, &opts).unwrap_err();
        assert!(matches!(
            err,
            EstimationError::Fit { source: FitError::SingleClass, .. }
        ));
    }
}
