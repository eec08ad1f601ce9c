//! Nuisance fitting and the target-domain predictors.
//!
//! Five conditional probabilities are learned from observed data:
//!
//! | model  | training rows            | response |
//! |--------|--------------------------|----------|
//! | `xi`   | source                   | Y        |
//! | `xi0`  | source, a=0              | Y        |
//! | `tau1` | source                   | A        |
//! | `tau0` | target                   | A        |
//! | `kappa`| a=1 rows of both domains | R        |
//!
//! Combined with the proportion blocks they give the target predictors
//! `eta1`, `eta0`, `eta`, alongside the naive source-model baseline
//! `xi`, `xi0`, `xi1`.

use serde::{Deserialize, Serialize};

use crate::classify::{fit_logistic, FitOptions, ProbModel, Probability};
use crate::dataset::Dataset;
use crate::error::EstimationError;
use crate::proportions::{SourceProportions, TargetProportions};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// The five conditionals needed to assemble the predictors.
pub trait Nuisances {
    fn xi0(&self, x: &[f64]) -> f64;
    fn xi(&self, x: &[f64]) -> f64;
    fn tau0(&self, x: &[f64]) -> f64;
    fn tau1(&self, x: &[f64]) -> f64;
    fn kappa(&self, x: &[f64]) -> f64;
}

impl<N: Nuisances + ?Sized> Nuisances for &N {
    fn xi0(&self, x: &[f64]) -> f64 {
        (**self).xi0(x)
    }
    fn xi(&self, x: &[f64]) -> f64 {
        (**self).xi(x)
    }
    fn tau0(&self, x: &[f64]) -> f64 {
        (**self).tau0(x)
    }
    fn tau1(&self, x: &[f64]) -> f64 {
        (**self).tau1(x)
    }
    fn kappa(&self, x: &[f64]) -> f64 {
        (**self).kappa(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceBundle {
    pub xi0: ProbModel,
    pub xi: ProbModel,
    pub tau0: ProbModel,
    pub tau1: ProbModel,
    pub kappa: ProbModel,
}

impl NuisanceBundle {
    pub fn dim(&self) -> usize {
        self.xi0.dim()
    }

    pub fn check(&self) -> Result<(), String> {
        let q = self.dim();
        for (name, m) in self.models() {
            m.check().map_err(|e| format!("{name}: {e}"))?;
            if m.dim() != q {
                return Err(format!("{name} has dimension {}, expected {q}", m.dim()));
            }
        }
        Ok(())
    }

    pub fn models(&self) -> [(&'static str, &ProbModel); 5] {
        [
            ("xi0", &self.xi0),
            ("xi", &self.xi),
            ("tau0", &self.tau0),
            ("tau1", &self.tau1),
            ("kappa", &self.kappa),
        ]
    }
}

impl Nuisances for NuisanceBundle {
    fn xi0(&self, x: &[f64]) -> f64 {
        self.xi0.prob(x)
    }
    fn xi(&self, x: &[f64]) -> f64 {
        self.xi.prob(x)
    }
    fn tau0(&self, x: &[f64]) -> f64 {
        self.tau0.prob(x)
    }
    fn tau1(&self, x: &[f64]) -> f64 {
        self.tau1.prob(x)
    }
    fn kappa(&self, x: &[f64]) -> f64 {
        self.kappa.prob(x)
    }
}

fn fit_one(
    model: &'static str,
    rows: Vec<&[f64]>,
    labels: Vec<bool>,
    opts: &FitOptions,
) -> Result<ProbModel, EstimationError> {
    fit_logistic(&rows, &labels, None, opts).map_err(|source| EstimationError::Fit { model, source })
}

/// Fit all five nuisance models on a validated dataset.
pub fn fit_nuisance(ds: &Dataset, opts: &FitOptions) -> Result<NuisanceBundle, EstimationError> {
    let source: Vec<_> = ds.iter().filter(|s| s.is_source()).collect();
    let xi = fit_one(
        "xi",
        source.iter().map(|s| s.features()).collect(),
        source.iter().map(|s| s.y() == Some(1)).collect(),
        opts,
    )?;
    let land: Vec<_> = source.iter().filter(|s| s.a() == 0).collect();
    let xi0 = fit_one(
        "xi0",
        land.iter().map(|s| s.features()).collect(),
        land.iter().map(|s| s.y() == Some(1)).collect(),
        opts,
    )?;
    let tau1 = fit_one(
        "tau1",
        source.iter().map(|s| s.features()).collect(),
        source.iter().map(|s| s.a() == 1).collect(),
        opts,
    )?;
    let target: Vec<_> = ds.iter().filter(|s| !s.is_source()).collect();
    let tau0 = fit_one(
        "tau0",
        target.iter().map(|s| s.features()).collect(),
        target.iter().map(|s| s.a() == 1).collect(),
        opts,
    )?;
    let water: Vec<_> = ds.iter().filter(|s| s.a() == 1).collect();
    let kappa = fit_one(
        "kappa",
        water.iter().map(|s| s.features()).collect(),
        water.iter().map(|s| s.is_source()).collect(),
        opts,
    )?;
    Ok(NuisanceBundle {
        xi0,
        xi,
        tau0,
        tau1,
        kappa,
    })
}

/// Strict-threshold decision rule: positive iff `p > threshold`.
pub fn classify(p: f64, threshold: f64) -> bool {
    p > threshold
}

/// Every model output at one point, plus whether `eta1` / `xi1` had to be
/// clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrediction {
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

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPredictor<N> {
    pub nuisances: N,
    pub source: SourceProportions,
    pub target: TargetProportions,
    pub threshold: f64,
}

impl<N: Nuisances> TargetPredictor<N> {
    pub fn new(nuisances: N, source: SourceProportions, target: TargetProportions) -> Self {
        Self {
            nuisances,
            source,
            target,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// `eta1` before clamping; leaves `[0, 1]` under estimation noise.
    pub fn eta1_raw(&self, x: &[f64]) -> f64 {
        let k = self.nuisances.kappa(x);
        let sp = &self.source;
        1.0 - self.target.beta01 / sp.alpha01 * (1.0 - sp.pi) / sp.pi * (k / (1.0 - k))
    }

    pub fn eta1(&self, x: &[f64]) -> f64 {
        self.eta1_raw(x).clamp(0.0, 1.0)
    }

    pub fn eta0(&self, x: &[f64]) -> f64 {
        eta0_formula(self.nuisances.xi0(x), &self.source, &self.target)
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        let t = self.nuisances.tau0(x);
        self.eta1(x) * t + self.eta0(x) * (1.0 - t)
    }

    /// Mixture of the unclamped `eta1` and `eta0`.
    pub fn eta_raw(&self, x: &[f64]) -> f64 {
        let t = self.nuisances.tau0(x);
        self.eta1_raw(x) * t + self.eta0(x) * (1.0 - t)
    }

    pub fn xi(&self, x: &[f64]) -> f64 {
        self.nuisances.xi(x)
    }

    pub fn xi0(&self, x: &[f64]) -> f64 {
        self.nuisances.xi0(x)
    }

    pub fn naive_xi1_raw(&self, x: &[f64]) -> f64 {
        xi1_formula(
            self.nuisances.xi(x),
            self.nuisances.xi0(x),
            self.nuisances.tau1(x),
        )
    }

    pub fn naive_xi1(&self, x: &[f64]) -> f64 {
        self.naive_xi1_raw(x).clamp(0.0, 1.0)
    }

    pub fn predict(&self, x: &[f64]) -> PointPrediction {
        let eta1_raw = self.eta1_raw(x);
        let eta1 = eta1_raw.clamp(0.0, 1.0);
        let xi0 = self.nuisances.xi0(x);
        let eta0 = eta0_formula(xi0, &self.source, &self.target);
        let tau0 = self.nuisances.tau0(x);
        let xi = self.nuisances.xi(x);
        let xi1_raw = xi1_formula(xi, xi0, self.nuisances.tau1(x));
        let xi1 = xi1_raw.clamp(0.0, 1.0);
        PointPrediction {
            eta1,
            eta0,
            tau0,
            eta: eta1 * tau0 + eta0 * (1.0 - tau0),
            xi,
            xi0,
            xi1,
            eta1_clamped: eta1 != eta1_raw,
            xi1_clamped: xi1 != xi1_raw,
        }
    }

    pub fn classify(&self, p: f64) -> bool {
        classify(p, self.threshold)
    }
}

/// `eta0` from `xi0` and the proportion ratios.
pub fn eta0_formula(xi0: f64, sp: &SourceProportions, tp: &TargetProportions) -> f64 {
    let r = tp.beta10 / sp.alpha10;
    let s = tp.beta00 / sp.alpha00;
    let num = r * xi0;
    let den = num + s * (1.0 - xi0);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Naive `xi1` before clamping.
pub fn xi1_formula(xi: f64, xi0: f64, tau1: f64) -> f64 {
    (xi - xi0 * (1.0 - tau1)) / tau1
}
