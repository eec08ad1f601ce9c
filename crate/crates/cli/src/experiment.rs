//! Replicated experiment runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use subpop_core::dataset::{read_csv, Dataset};
use subpop_core::synthgen::{derive_seed, generate, oracle_spec, partition_pool, LabeledSplit, PartitionSpec, SyntheticSpec};
use subpop_core::TargetProportions;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{write_string, CliError, Result};
use crate::metrics::summarize;
use crate::pipeline::{empirical_target_proportions, fit_pipeline, PipelineOptions};
use crate::predictions::{evaluate_tags, score_targets, Tag, TagMetrics};

pub const METRICS_HEADER: &str =
    "rep,tag,n_eval,accuracy,f1,clamp_rate,beta10_hat,beta00_hat,beta01_hat,beta11_hat,failed";

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// `[beta10, beta00, beta01, beta11]`.
pub type BetaBlock = [f64; 4];

fn beta_block(tp: &TargetProportions) -> BetaBlock {
    [tp.beta10, tp.beta00, tp.beta01, tp.beta11]
}

const BETA_NAMES: [&str; 4] = ["beta10", "beta00", "beta01", "beta11"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub rep: usize,
    pub tag: Tag,
    pub n_eval: usize,
    /// `None` on failed replications.
    pub metrics: Option<TagMetrics>,
    pub beta_hat: Option<BetaBlock>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub outcome: std::result::Result<ReplicationResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub metrics: Vec<TagMetrics>,
    pub beta_hat: BetaBlock,
    pub beta_true: BetaBlock,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub replications: Vec<Replication>,
}

enum Source {
    Synthetic(SyntheticSpec),
    Pool { pool: Dataset, rates: crate::config::RatesSection },
}

impl Source {
    /// Data split plus true target proportions for replication seed `seed`.
    fn draw(&self, seed: u64) -> Result<(LabeledSplit, TargetProportions)> {
        match self {
            Source::Synthetic(base) => {
                let spec = SyntheticSpec { seed, ..base.clone() };
                let split = generate(&spec)?;
                Ok((split, oracle_spec(&spec).target_proportions()))
            }
            Source::Pool { pool, rates } => {
                let ps = PartitionSpec {
                    rate_a: rates.a,
                    rate_b: rates.b,
                    rate_c: rates.c,
                    seed,
                };
                let split = partition_pool(pool, &ps)?;
                let c = split.dataset.cell_counts();
                let b1 = c.n110 as f64 / (c.n110 + c.n100).max(1) as f64;
                let tp = empirical_target_proportions(&split.dataset, &split.truth, b1)?;
                Ok((split, tp))
            }
        }
    }
}

fn run_one(source: &Source, opts: &PipelineOptions, seed: u64) -> Result<ReplicationResult> {
    let (split, truth_tp) = source.draw(seed)?;
    let art = fit_pipeline(&split.dataset, opts, Some(&truth_tp))?;
    let predictor = art.predictor()?;
    let rows = score_targets(&predictor, &split.dataset);
    let metrics = evaluate_tags(&rows, &split.truth, opts.threshold)?;
    Ok(ReplicationResult {
        metrics,
        beta_hat: beta_block(&art.proportions.target()?),
        beta_true: beta_block(&truth_tp),
        warnings: art.proportions.warnings,
    })
}

/// Run every replication (concurrently) and enforce the failure budget.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let opts = cfg.pipeline_options()?;
    let source = match cfg.data_source()? {
        DataSource::Synthetic { n1, n0, means } => Source::Synthetic(SyntheticSpec {
            means,
            ..SyntheticSpec::new(n1, n0, cfg.seed)
        }),
        DataSource::Pool { path, rates } => Source::Pool {
            pool: read_csv(&path, true)?,
            rates,
        },
    };

    let replications: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.seed, rep as u64);
            Replication {
                rep,
                seed,
                outcome: run_one(&source, &opts, seed).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let failed: Vec<&Replication> = replications.iter().filter(|r| r.outcome.is_err()).collect();
    if failed.len() as f64 > MAX_FAILURE_RATE * cfg.replications as f64 {
        return Err(CliError::TooManyFailures {
            failed: failed.len(),
            total: cfg.replications,
            first: failed[0].outcome.clone().unwrap_err(),
        });
    }
    Ok(ExperimentResult { replications })
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<MetricsRow> {
        let mut out = Vec::with_capacity(self.replications.len() * Tag::ALL.len());
        for r in &self.replications {
            match &r.outcome {
                Ok(res) => out.extend(res.metrics.iter().map(|m| MetricsRow {
                    rep: r.rep,
                    tag: m.tag,
                    n_eval: m.n_eval,
                    metrics: Some(*m),
                    beta_hat: Some(res.beta_hat),
                    failed: false,
                })),
                Err(_) => out.extend(Tag::ALL.iter().map(|&tag| MetricsRow {
                    rep: r.rep,
                    tag,
                    n_eval: 0,
                    metrics: None,
                    beta_hat: None,
                    failed: true,
                })),
            }
        }
        out
    }

    pub fn failed(&self) -> usize {
        self.replications.iter().filter(|r| r.outcome.is_err()).count()
    }

    fn successes(&self) -> impl Iterator<Item = &ReplicationResult> {
        self.replications.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    /// Mean of one metric for one tag across successful replications.
    pub fn mean(&self, tag: Tag, metric: fn(&TagMetrics) -> f64) -> Option<f64> {
        let v: Vec<f64> = self
            .successes()
            .flat_map(|r| r.metrics.iter().filter(|m| m.tag == tag).map(metric))
            .collect();
        summarize(&v).map(|s| s.mean)
    }

    /// Per-tag boxplot statistics, beta estimates and their mean absolute
    /// error against the truth.
    pub fn summary(&self) -> Value {
        let mut tags = BTreeMap::new();
        for tag in Tag::ALL {
            let ms: Vec<TagMetrics> = self
                .successes()
                .flat_map(|r| r.metrics.iter().copied().filter(|m| m.tag == tag))
                .collect();
            let stat = |f: fn(&TagMetrics) -> f64| summarize(&ms.iter().map(f).collect::<Vec<_>>());
            tags.insert(
                tag.name(),
                json!({
                    "n_eval": stat(|m| m.n_eval as f64),
                    "accuracy": stat(|m| m.accuracy),
                    "f1": stat(|m| m.f1),
                    "clamp_rate": stat(|m| m.clamp_rate),
                }),
            );
        }
        let mut beta_hat = BTreeMap::new();
        let mut beta_error = BTreeMap::new();
        for (k, name) in BETA_NAMES.iter().enumerate() {
            let est: Vec<f64> = self.successes().map(|r| r.beta_hat[k]).collect();
            let err: Vec<f64> = self.successes().map(|r| (r.beta_hat[k] - r.beta_true[k]).abs()).collect();
            beta_hat.insert(*name, summarize(&est));
            beta_error.insert(*name, summarize(&err).map(|s| s.mean));
        }
        let warnings: usize = self.successes().map(|r| r.warnings.len()).sum();
        let failures: Vec<Value> = self
            .replications
            .iter()
            .filter_map(|r| {
                r.outcome
                    .as_ref()
                    .err()
                    .map(|e| json!({ "rep": r.rep, "seed": r.seed, "error": e }))
            })
            .collect();
        json!({
            "replications": self.replications.len(),
            "failed": self.failed(),
            "failures": failures,
            "warnings": warnings,
            "tags": tags,
            "beta_hat": beta_hat,
            "beta_abs_error_mean": beta_error,
        })
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.rep, r.tag.name(), r.n_eval);
        match &r.metrics {
            Some(m) => {
                let _ = write!(out, ",{},{},{}", m.accuracy, m.f1, m.clamp_rate);
            }
            None => out.push_str(",,,"),
        }
        match &r.beta_hat {
            Some(b) => {
                let _ = write!(out, ",{},{},{},{}", b[0], b[1], b[2], b[3]);
            }
            None => out.push_str(",,,,"),
        }
        let _ = writeln!(out, ",{}", r.failed as u8);
    }
    out
}

/// Write `metrics.csv` and `summary.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    write_string(&dir.join("metrics.csv"), &metrics_to_csv(&result.rows()))?;
    let summary = serde_json::to_string_pretty(&result.summary()).expect("summary serializes");
    write_string(&dir.join("summary.json"), &(summary + "\n"))
}
