//! Nuisance fitting plus proportion estimation, shared by `fit` and
//! `experiment`.

use serde::{Deserialize, Serialize};
use subpop_core::adapt::{fit_nuisance, NuisanceBundle, TargetPredictor};
use subpop_core::classify::FitOptions;
use subpop_core::dataset::{validate, Dataset};
use subpop_core::proportions::{
    estimate_beta01_anchor, estimate_beta_kl, estimate_beta_moment, estimate_rho_b1,
    estimate_source_proportions, MomentSpec, ProportionReport, DEFAULT_ANCHOR_QUANTILE,
};
use subpop_core::synthgen::TruthRow;
use subpop_core::{EstimationError, TargetProportions};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMethodName {
    Kl,
    Moment,
    Oracle,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beta01MethodName {
    Anchor,
    User,
    Oracle,
}

impl std::str::FromStr for BetaMethodName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kl" => Ok(Self::Kl),
            "moment" => Ok(Self::Moment),
            "oracle" => Ok(Self::Oracle),
            "user" => Ok(Self::User),
            _ => Err(format!("unknown beta method {s:?} (kl | moment | oracle | user)")),
        }
    }
}

impl std::str::FromStr for Beta01MethodName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "anchor" => Ok(Self::Anchor),
            "user" => Ok(Self::User),
            "oracle" => Ok(Self::Oracle),
            _ => Err(format!("unknown beta01 method {s:?} (anchor | user | oracle)")),
        }
    }
}

/// Resolved land-pair method.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaMethod {
    Kl,
    Moment(MomentSpec),
    /// True proportions, supplied by the caller at fit time.
    Oracle,
    User { beta10: f64, beta00: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta01Method {
    Anchor { quantile: f64 },
    Oracle,
    User(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub fit: FitOptions,
    pub beta: BetaMethod,
    pub beta01: Beta01Method,
    pub threshold: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            beta: BetaMethod::Kl,
            beta01: Beta01Method::Anchor {
                quantile: DEFAULT_ANCHOR_QUANTILE,
            },
            threshold: subpop_core::adapt::DEFAULT_THRESHOLD,
        }
    }
}

impl BetaMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BetaMethod::Kl => "kl",
            BetaMethod::Moment(_) => "moment",
            BetaMethod::Oracle => "oracle",
            BetaMethod::User { .. } => "user",
        }
    }
}

/// Everything `predict` needs: the five nuisances, the proportion block and
/// the decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArtifact {
    pub nuisances: NuisanceBundle,
    pub proportions: ProportionReport,
    pub threshold: f64,
}

impl FitArtifact {
    pub fn predictor(&self) -> Result<TargetPredictor<&NuisanceBundle>> {
        Ok(TargetPredictor::new(
            &self.nuisances,
            self.proportions.source()?,
            self.proportions.target()?,
        )
        .with_threshold(self.threshold))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }
}

/// Parse and check a fit artifact.
pub fn parse_fit_json(text: &str) -> Result<FitArtifact> {
    let art: FitArtifact = serde_json::from_str(text).map_err(|e| CliError::Format {
        what: "fit JSON",
        message: e.to_string(),
    })?;
    let bad = |message: String| CliError::Format {
        what: "fit JSON",
        message,
    };
    art.nuisances.check().map_err(bad)?;
    art.proportions.source()?;
    art.proportions.target()?;
    if !(art.threshold > 0.0 && art.threshold < 1.0) {
        return Err(bad(format!("threshold {} outside (0, 1)", art.threshold)));
    }
    Ok(art)
}

/// Empirical target proportions from the truth table of a split.
pub fn empirical_target_proportions(
    ds: &Dataset,
    truth: &[TruthRow],
    b1: f64,
) -> Result<TargetProportions> {
    if truth.is_empty() {
        return Err(EstimationError::EmptyCell("target truth").into());
    }
    let mut n = [0usize; 4];
    for t in truth {
        let s = ds.samples().get(t.row_index).ok_or_else(|| CliError::Format {
            what: "truth table",
            message: format!("row index {} out of range", t.row_index),
        })?;
        n[2 * t.y_true as usize + s.a() as usize] += 1;
    }
    let m = truth.len() as f64;
    let [b00, b01, b10, b11] = n.map(|k| k as f64 / m);
    let rho = b10 + b00;
    Ok(TargetProportions {
        beta11: b11,
        beta10: b10,
        beta01: b01,
        beta00: b00,
        rho,
        b1,
    })
}

/// Fit the nuisances on `ds` and estimate every proportion. `oracle`
/// supplies true target proportions for the oracle methods.
pub fn fit_pipeline(
    ds: &Dataset,
    opts: &PipelineOptions,
    oracle: Option<&TargetProportions>,
) -> Result<FitArtifact> {
    let report = validate(ds, false)?;
    let c = report.counts;
    let sp = estimate_source_proportions(&c)?;
    let (rho, b1) = estimate_rho_b1(&c)?;
    let bundle = fit_nuisance(ds, &opts.fit)?;
    let target_a0 = ds.subset(|k| k.r == 0 && k.a == 0);
    let target_a1 = ds.subset(|k| k.r == 0 && k.a == 1);
    let need_oracle = || {
        oracle.ok_or_else(|| CliError::Config("oracle method needs known target proportions".into()))
    };

    let mut warnings = report.warnings;
    let (beta10, beta00, rho) = match &opts.beta {
        BetaMethod::Kl => {
            let est = estimate_beta_kl(&bundle.xi0, &target_a0, b1, rho)?;
            warnings.extend(est.warnings);
            (est.beta10, est.beta00, rho)
        }
        BetaMethod::Moment(spec) => {
            let est = estimate_beta_moment(spec, ds, &target_a0, rho)?;
            warnings.extend(est.warnings);
            (est.beta10, est.beta00, rho)
        }
        BetaMethod::Oracle => {
            let tp = need_oracle()?;
            (tp.beta10, tp.beta00, tp.rho)
        }
        BetaMethod::User { beta10, beta00 } => (*beta10, *beta00, beta10 + beta00),
    };
    let beta01 = match opts.beta01 {
        Beta01Method::Anchor { quantile } => {
            estimate_beta01_anchor(&bundle.kappa, &target_a1, sp.alpha01, sp.pi, rho, quantile)?.0
        }
        Beta01Method::Oracle => need_oracle()?.beta01,
        Beta01Method::User(v) => v,
    };
    let tp = TargetProportions::from_parts(beta10, beta00, beta01, b1)?;
    Ok(FitArtifact {
        nuisances: bundle,
        proportions: ProportionReport::new(&sp, &tp, opts.beta.name(), warnings),
        threshold: opts.threshold,
    })
}
