//! Experiment manifest. TOML, flat keys plus three optional tables:
//!
//! ```toml
//! replications = 50
//! seed = 7
//! lambda = 0.01
//! threshold = 0.5
//! beta_method = "kl"        # kl | moment | oracle | user
//! beta01_method = "anchor"  # anchor | user | oracle
//! anchor_quantile = 0.01
//! output_dir = "runs/synthetic"
//!
//! [synthetic]
//! n1 = 4000
//! n0 = 4000
//!
//! # or, for a labeled pool:
//! # [pool]
//! # path = "pool.csv"
//! # [rates]
//! # a = 0.5
//! # b = 0.5
//! # c = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subpop_core::classify::{FitOptions, DEFAULT_LAMBDA};
use subpop_core::proportions::{MomentSpec, DEFAULT_ANCHOR_QUANTILE};
use subpop_core::synthgen::CellMeans;

use crate::error::{CliError, Result};
use crate::pipeline::{Beta01Method, Beta01MethodName, BetaMethod, BetaMethodName, PipelineOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n1: usize,
    pub n0: usize,
    /// Overrides the default cell means.
    #[serde(default)]
    pub means: Option<CellMeans>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_beta")]
    pub beta_method: BetaMethodName,
    #[serde(default = "default_beta01")]
    pub beta01_method: Beta01MethodName,
    #[serde(default = "default_quantile")]
    pub anchor_quantile: f64,
    /// Principal axis when absent.
    #[serde(default)]
    pub moment_direction: Option<Vec<f64>>,
    #[serde(default)]
    pub user_beta10: Option<f64>,
    #[serde(default)]
    pub user_beta00: Option<f64>,
    #[serde(default)]
    pub user_beta01: Option<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub pool: Option<PoolSection>,
    #[serde(default)]
    pub rates: Option<RatesSection>,
}

fn one() -> usize {
    1
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_threshold() -> f64 {
    0.5
}
fn default_beta() -> BetaMethodName {
    BetaMethodName::Kl
}
fn default_beta01() -> Beta01MethodName {
    Beta01MethodName::Anchor
}
fn default_quantile() -> f64 {
    DEFAULT_ANCHOR_QUANTILE
}
fn default_output() -> PathBuf {
    PathBuf::from("experiment-out")
}

/// Where each replication's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { n1: usize, n0: usize, means: CellMeans },
    Pool { path: PathBuf, rates: RatesSection },
}

impl ExperimentConfig {
    pub fn synthetic(n1: usize, n0: usize) -> Self {
        Self {
            replications: 1,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            threshold: 0.5,
            beta_method: BetaMethodName::Kl,
            beta01_method: Beta01MethodName::Anchor,
            anchor_quantile: DEFAULT_ANCHOR_QUANTILE,
            moment_direction: None,
            user_beta10: None,
            user_beta00: None,
            user_beta01: None,
            output_dir: default_output(),
            synthetic: Some(SyntheticSection { n1, n0, means: None }),
            pool: None,
            rates: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse without [`validate`](Self::validate), so flags can fill in
    /// missing pieces first.
    pub fn parse_unchecked(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_unchecked(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.replications == 0 {
            return err("replications must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return err(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return err(format!("lambda {} must be finite and nonnegative", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.anchor_quantile) {
            return err(format!("anchor_quantile {} must lie in [0, 1]", self.anchor_quantile));
        }
        self.data_source()?;
        self.pipeline_options()?;
        Ok(())
    }

    pub fn data_source(&self) -> Result<DataSource> {
        match (&self.synthetic, &self.pool) {
            (Some(s), None) => {
                if s.n1 == 0 || s.n0 == 0 {
                    return Err(CliError::Config("synthetic n1 and n0 must be positive".into()));
                }
                if self.rates.is_some() {
                    return Err(CliError::Config("[rates] only applies to [pool]".into()));
                }
                Ok(DataSource::Synthetic {
                    n1: s.n1,
                    n0: s.n0,
                    means: s.means.clone().unwrap_or_default(),
                })
            }
            (None, Some(p)) => {
                let rates = self
                    .rates
                    .ok_or_else(|| CliError::Config("[pool] needs a [rates] table".into()))?;
                for (k, r) in [("a", rates.a), ("b", rates.b), ("c", rates.c)] {
                    if !(r > 0.0 && r < 1.0) {
                        return Err(CliError::Config(format!("rate {k} = {r} must lie in (0, 1)")));
                    }
                }
                Ok(DataSource::Pool {
                    path: p.path.clone(),
                    rates,
                })
            }
            (Some(_), Some(_)) => Err(CliError::Config("give either [synthetic] or [pool], not both".into())),
            (None, None) => Err(CliError::Config("missing data source: [synthetic] or [pool]".into())),
        }
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| CliError::Config(format!("user method needs {key}")))
        };
        let beta = match self.beta_method {
            BetaMethodName::Kl => BetaMethod::Kl,
            BetaMethodName::Moment => BetaMethod::Moment(match &self.moment_direction {
                Some(d) => MomentSpec::Direction(d.clone()),
                None => MomentSpec::PrincipalAxis,
            }),
            BetaMethodName::Oracle => BetaMethod::Oracle,
            BetaMethodName::User => BetaMethod::User {
                beta10: need(self.user_beta10, "user_beta10")?,
                beta00: need(self.user_beta00, "user_beta00")?,
            },
        };
        let beta01 = match self.beta01_method {
            Beta01MethodName::Anchor => Beta01Method::Anchor {
                quantile: self.anchor_quantile,
            },
            Beta01MethodName::Oracle => Beta01Method::Oracle,
            Beta01MethodName::User => Beta01Method::User(need(self.user_beta01, "user_beta01")?),
        };
        Ok(PipelineOptions {
            fit: FitOptions::with_lambda(self.lambda),
            beta,
            beta01,
            threshold: self.threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_config() {
        let cfg = ExperimentConfig::from_toml_str("[synthetic]\nn1 = 100\nn0 = 100\n").unwrap();
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.beta_method, BetaMethodName::Kl);
        assert_eq!(cfg.threshold, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "replications = 0\n[synthetic]\nn1 = 1\nn0 = 1\n",
            "threshold = 1.0\n[synthetic]\nn1 = 1\nn0 = 1\n",
            "beta_method = \"em\"\n[synthetic]\nn1 = 1\nn0 = 1\n",
            "beta_method = \"user\"\n[synthetic]\nn1 = 1\nn0 = 1\n",
            "bogus = 1\n[synthetic]\nn1 = 1\nn0 = 1\n",
            "[pool]\npath = \"p.csv\"\n",
            "",
        ] {
            let e = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text:?}");
        }
    }

    #[test]
    fn pool_config_and_means_override() {
        let cfg = ExperimentConfig::from_toml_str(
            "[pool]\npath = \"p.csv\"\n[rates]\na = 0.5\nb = 0.4\nc = 0.3\n",
        )
        .unwrap();
        assert!(matches!(cfg.data_source().unwrap(), DataSource::Pool { .. }));
        let cfg = ExperimentConfig::from_toml_str(
            "[synthetic]\nn1 = 5\nn0 = 5\n[synthetic.means]\nm00 = [1.0, 0.0]\nm01 = [0.0, 1.0]\nm10 = [2.0, 0.0]\nm11 = [0.0, 2.0]\n",
        )
        .unwrap();
        let DataSource::Synthetic { means, .. } = cfg.data_source().unwrap() else { panic!() };
        assert_eq!(means.dim(), 2);
    }
}
