//! Synthetic data: the four-Gaussian design with identity covariance, its
//! closed-form oracle, and the rate-based partitioner that turns a fully
//! labeled pool into a source/target split.
//!
//! # Random streams
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` with a
//! stream selected by `set_stream`:
//!
//! * stream `16 * d` draws the `(y, a)` cell of every row in domain `d`
//!   (`d = 1` source, `d = 0` target),
//! * stream `16 * d + 1 + k` draws the Gaussian features of every row that
//!   landed in cell `k` (`k = 2y + a`) of domain `d`, in row order,
//! * stream [`PARTITION_STREAM`] draws one uniform per pool row for
//!   [`partition_pool`],
//! * stream `REPLICATION_STREAM | rep` of the master seed yields the seed of
//!   replication `rep` (see [`derive_seed`]).
//!
//! Changing the size of one cell therefore never perturbs the features of
//! another.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapt::{Nuisances, TargetPredictor};
use crate::dataset::{Dataset, Sample};
use crate::error::DataError;
use crate::proportions::{SourceProportions, TargetProportions};

pub const PARTITION_STREAM: u64 = 64;
pub const REPLICATION_STREAM: u64 = 1 << 32;

/// Seed for replication `rep` of a run with master seed `seed`.
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    rng(seed, REPLICATION_STREAM | rep).next_u64()
}

/// Cell index `2y + a`.
pub fn cell_index(y: u8, a: u8) -> usize {
    2 * y as usize + a as usize
}

/// Gaussian cell means indexed by `(y, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeans {
    pub m00: Vec<f64>,
    pub m01: Vec<f64>,
    pub m10: Vec<f64>,
    pub m11: Vec<f64>,
}

impl Default for CellMeans {
    fn default() -> Self {
        Self {
            m00: vec![1.0, 0.0, 0.0, 0.0],
            m01: vec![0.0, 0.0, 1.0, 0.0],
            m10: vec![0.0, 1.0, 0.0, 0.0],
            m11: vec![0.0, 0.0, 0.0, 1.0],
        }
    }
}

impl CellMeans {
    pub fn get(&self, y: u8, a: u8) -> &[f64] {
        match (y, a) {
            (0, 0) => &self.m00,
            (0, _) => &self.m01,
            (_, 0) => &self.m10,
            _ => &self.m11,
        }
    }

    /// Means in cell-index order.
    pub fn by_index(&self) -> [&[f64]; 4] {
        [&self.m00, &self.m01, &self.m10, &self.m11]
    }

    pub fn dim(&self) -> usize {
        self.m00.len()
    }
}

/// Cell probabilities of the source `(alpha)` and target `(beta)` domains.
/// Source `(1,1)` is structurally zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbabilities {
    pub alpha10: f64,
    pub alpha01: f64,
    pub alpha00: f64,
    pub beta11: f64,
    pub beta10: f64,
    pub beta01: f64,
    pub beta00: f64,
}

impl Default for CellProbabilities {
    fn default() -> Self {
        Self {
            alpha10: 1.0 / 3.0,
            alpha01: 1.0 / 3.0,
            alpha00: 1.0 / 3.0,
            beta11: 0.25,
            beta10: 0.25,
            beta01: 0.25,
            beta00: 0.25,
        }
    }
}

impl CellProbabilities {
    /// Source weights in cell-index order.
    pub fn source_weights(&self) -> [f64; 4] {
        [self.alpha00, self.alpha01, self.alpha10, 0.0]
    }

    pub fn target_weights(&self) -> [f64; 4] {
        [self.beta00, self.beta01, self.beta10, self.beta11]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub means: CellMeans,
    pub cells: CellProbabilities,
    pub n1: usize,
    pub n0: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n1: usize, n0: usize, seed: u64) -> Self {
        Self {
            means: CellMeans::default(),
            cells: CellProbabilities::default(),
            n1,
            n0,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), DataError> {
        let invalid = |message: String| DataError::Invalid {
            what: "synthetic spec",
            message,
        };
        if self.n1 == 0 || self.n0 == 0 {
            return Err(invalid("n1 and n0 must be positive".into()));
        }
        let q = self.means.dim();
        if q == 0 || self.means.by_index().iter().any(|m| m.len() != q) {
            return Err(invalid("all four means must share a positive dimension".into()));
        }
        if self.means.by_index().iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(invalid("means must be finite".into()));
        }
        for (name, w) in [
            ("source", self.cells.source_weights()),
            ("target", self.cells.target_weights()),
        ] {
            let sum: f64 = w.iter().sum();
            if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("{name} cell probabilities must form a distribution")));
            }
        }
        Ok(())
    }

    /// Nominal share of source rows, `n1 / (n1 + n0)`.
    pub fn pi(&self) -> f64 {
        self.n1 as f64 / (self.n1 + self.n0) as f64
    }
}

/// Target ground truth keyed by row index in the generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub row_index: usize,
    pub y_true: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub dataset: Dataset,
    pub truth: Vec<TruthRow>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn draw_domain(spec: &SyntheticSpec, domain: u64, n: usize, weights: [f64; 4]) -> Vec<(usize, Vec<f64>)> {
    let dist = WeightedIndex::new(weights).expect("validated cell probabilities");
    let mut cell_rng = rng(spec.seed, 16 * domain);
    let mut feat_rngs: Vec<ChaCha8Rng> = (0..4).map(|k| rng(spec.seed, 16 * domain + 1 + k)).collect();
    let means = spec.means.by_index();
    (0..n)
        .map(|_| {
            let k = dist.sample(&mut cell_rng);
            let r = &mut feat_rngs[k];
            let x = means[k]
                .iter()
                .map(|m| m + r.sample::<f64, _>(StandardNormal))
                .collect();
            (k, x)
        })
        .collect()
}

/// Draw `n1` source rows followed by `n0` target rows.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledSplit, DataError> {
    spec.check()?;
    let mut samples = Vec::with_capacity(spec.n1 + spec.n0);
    for (k, x) in draw_domain(spec, 1, spec.n1, spec.cells.source_weights()) {
        samples.push(Sample::source(x, k >= 2, k % 2 == 1));
    }
    let mut truth = Vec::with_capacity(spec.n0);
    for (k, x) in draw_domain(spec, 0, spec.n0, spec.cells.target_weights()) {
        truth.push(TruthRow {
            row_index: samples.len(),
            y_true: (k >= 2) as u8,
        });
        samples.push(Sample::target(x, k % 2 == 1));
    }
    Ok(LabeledSplit {
        dataset: Dataset::new(spec.means.dim(), samples)?,
        truth,
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Closed-form nuisances and predictors for a [`SyntheticSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModels {
    pub means: CellMeans,
    pub cells: CellProbabilities,
    pub pi: f64,
}

impl OracleModels {
    /// Log density of each cell at `x` up to a shared constant.
    pub fn log_densities(&self, x: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (o, m) in out.iter_mut().zip(self.means.by_index()) {
            *o = -0.5 * x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        out
    }

    /// `sum_{k in num} w_k p_k / sum_{k in den} w_k p_k`, evaluated in log space.
    fn ratio(&self, x: &[f64], w: [f64; 4], num: &[usize], den: &[usize]) -> f64 {
        let ld = self.log_densities(x);
        let terms = |idx: &[usize]| -> Vec<f64> {
            idx.iter()
                .filter(|&&k| w[k] > 0.0)
                .map(|&k| w[k].ln() + ld[k])
                .collect()
        };
        (log_sum_exp(&terms(num)) - log_sum_exp(&terms(den))).exp()
    }

    pub fn source_proportions(&self) -> SourceProportions {
        SourceProportions {
            alpha10: self.cells.alpha10,
            alpha01: self.cells.alpha01,
            alpha00: self.cells.alpha00,
            pi: self.pi,
        }
    }

    pub fn target_proportions(&self) -> TargetProportions {
        let c = &self.cells;
        TargetProportions {
            beta11: c.beta11,
            beta10: c.beta10,
            beta01: c.beta01,
            beta00: c.beta00,
            rho: c.beta10 + c.beta00,
            b1: c.alpha10 / (c.alpha10 + c.alpha00),
        }
    }

    /// `pr(Y=1 | x, R=0)` straight from the target mixture.
    pub fn bayes_posterior(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.target_weights(), &[2, 3], &[0, 1, 2, 3])
    }

    /// `pr(Y=1 | x, A=1, R=0)`.
    pub fn bayes_posterior_water(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.target_weights(), &[3], &[1, 3])
    }

    /// `pr(Y=1 | x, A=0, R=0)`.
    pub fn bayes_posterior_land(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.target_weights(), &[2], &[0, 2])
    }
}

impl Nuisances for OracleModels {
    fn xi0(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.source_weights(), &[2], &[0, 2])
    }

    fn xi(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.source_weights(), &[2], &[0, 1, 2])
    }

    fn tau0(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.target_weights(), &[1, 3], &[0, 1, 2, 3])
    }

    fn tau1(&self, x: &[f64]) -> f64 {
        self.ratio(x, self.cells.source_weights(), &[1], &[0, 1, 2])
    }

    fn kappa(&self, x: &[f64]) -> f64 {
        // Joint weights over (R, cell) restricted to A=1: index 0 is the
        // source (0,1) cell, 1 and 3 are the target water cells.
        let c = &self.cells;
        let ld = self.log_densities(x);
        let src = (self.pi * c.alpha01).ln() + ld[1];
        let mut tgt = Vec::new();
        for (w, l) in [(c.beta01, ld[1]), (c.beta11, ld[3])] {
            if w > 0.0 {
                tgt.push(((1.0 - self.pi) * w).ln() + l);
            }
        }
        let den = log_sum_exp(&[src, log_sum_exp(&tgt)]);
        (src - den).exp()
    }
}

/// Closed-form model set for `spec`, with `pi = n1 / (n1 + n0)`.
pub fn oracle_spec(spec: &SyntheticSpec) -> OracleModels {
    OracleModels {
        means: spec.means.clone(),
        cells: spec.cells,
        pi: spec.pi(),
    }
}

/// Predictor built from the oracle nuisances and the true proportions.
pub fn oracle_predictor(spec: &SyntheticSpec) -> TargetPredictor<OracleModels> {
    let oracle = oracle_spec(spec);
    let sp = oracle.source_proportions();
    let tp = oracle.target_proportions();
    TargetPredictor::new(oracle, sp, tp)
}

/// Source allocation rates for the `(0,1)`, `(1,0)` and `(0,0)` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn check(&self) -> Result<(), DataError> {
        for (name, r) in [("a", self.rate_a), ("b", self.rate_b), ("c", self.rate_c)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(DataError::Invalid {
                    what: "partition rate",
                    message: format!("rate {name} = {r} must lie strictly inside (0, 1)"),
                });
            }
        }
        Ok(())
    }

    /// Source probability of a pool row in cell `(y, a)`.
    pub fn rate(&self, y: u8, a: u8) -> f64 {
        match (y, a) {
            (0, 1) => self.rate_a,
            (1, 0) => self.rate_b,
            (0, 0) => self.rate_c,
            _ => 0.0,
        }
    }

    /// Expected source size per cell, in cell-index order.
    pub fn expected_source_sizes(&self, cell_sizes: [usize; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, (o, n)) in out.iter_mut().zip(cell_sizes).enumerate() {
            *o = n as f64 * self.rate((k / 2) as u8, (k % 2) as u8);
        }
        out
    }
}

/// Split a fully labeled pool into source and target rows.
///
/// Output row `i` is pool row `i`: rows sent to the target keep their
/// position but lose their label, which moves to the truth table.
pub fn partition_pool(pool: &Dataset, ps: &PartitionSpec) -> Result<LabeledSplit, DataError> {
    ps.check()?;
    let mut present = [false; 4];
    for (i, s) in pool.iter().enumerate() {
        match s.y() {
            Some(y) => present[cell_index(y, s.a())] = true,
            None => {
                return Err(DataError::Invalid {
                    what: "pool",
                    message: format!("row {i} is unlabeled"),
                })
            }
        }
    }
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(DataError::MissingCell {
            y: (k / 2) as u8,
            a: (k % 2) as u8,
        });
    }

    let mut r = rng(ps.seed, PARTITION_STREAM);
    let mut samples = Vec::with_capacity(pool.len());
    let mut truth = Vec::new();
    for (i, s) in pool.iter().enumerate() {
        let u: f64 = r.random();
        let y = s.y().expect("checked above");
        if u < ps.rate(y, s.a()) {
            samples.push(s.clone());
        } else {
            truth.push(TruthRow { row_index: i, y_true: y });
            samples.push(s.clone().into_target());
        }
    }
    Ok(LabeledSplit {
        dataset: Dataset::new(pool.q(), samples)?,
        truth,
    })
}

pub fn truth_to_csv_string(truth: &[TruthRow]) -> String {
    let mut out = String::from("row_index,y_true\n");
    for t in truth {
        let _ = writeln!(out, "{},{}", t.row_index, t.y_true);
    }
    out
}

/// Parse a `row_index,y_true` table. A header line is accepted when present.
pub fn parse_truth_csv(text: &str) -> Result<Vec<TruthRow>, DataError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("row_index")) {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (Some(i), Some(y), None) = (it.next(), it.next(), it.next()) else {
            return Err(DataError::Parse {
                row,
                message: "expected 2 columns".into(),
            });
        };
        let row_index = i.parse().map_err(|_| DataError::Parse {
            row,
            message: format!("bad row index {i:?}"),
        })?;
        let y_true = match y {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(DataError::Parse {
                    row,
                    message: format!("y_true must be 0 or 1, got {y:?}"),
                })
            }
        };
        out.push(TruthRow { row_index, y_true });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_means() {
        let m = CellMeans::default();
        assert_eq!(m.get(0, 0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.get(0, 1), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.get(1, 0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.get(1, 1), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn replication_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..50).map(|r| derive_seed(7, r)).collect();
        let mut uniq = seeds.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 50);
        assert_eq!(seeds[3], derive_seed(7, 3));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = SyntheticSpec::new(300, 200, 11);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn generate_layout() {
        let spec = SyntheticSpec::new(300, 200, 1);
        let g = generate(&spec).unwrap();
        assert_eq!(g.dataset.len(), 500);
        assert_eq!(g.truth.len(), 200);
        let c = g.dataset.cell_counts();
        assert_eq!(c.n1, 300);
        assert_eq!(c.n111, 0);
        assert!(g.truth.iter().all(|t| !g.dataset.samples()[t.row_index].is_source()));
    }

    #[test]
    fn oracle_true_blocks() {
        let o = oracle_spec(&SyntheticSpec::new(4000, 4000, 0));
        let tp = o.target_proportions();
        assert_eq!((tp.beta10, tp.rho, tp.b1), (0.25, 0.5, 0.5));
        assert_eq!(o.source_proportions().pi, 0.5);
    }

    #[test]
    fn oracle_xi0_at_mu10() {
        let o = oracle_spec(&SyntheticSpec::new(10, 10, 0));
        let x = CellMeans::default().m10;
        // |mu10 - mu00|^2 = 2 so the log density ratio is 1
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(o.xi0(&x), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(o.xi0(&x), 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn oracle_eta_symmetric_point() {
        let p = oracle_predictor(&SyntheticSpec::new(10, 10, 0));
        let x = [0.25; 4];
        assert_abs_diff_eq!(p.eta(&x), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(p.nuisances.bayes_posterior(&x), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn partition_requires_all_cells() {
        let pool = Dataset::new(
            1,
            vec![
                Sample::source(vec![0.0], false, false),
                Sample::source(vec![0.0], false, true),
                Sample::source(vec![0.0], true, false),
            ],
        )
        .unwrap();
        let ps = PartitionSpec { rate_a: 0.5, rate_b: 0.5, rate_c: 0.5, seed: 1 };
        assert!(matches!(
            partition_pool(&pool, &ps),
            Err(DataError::MissingCell { y: 1, a: 1 })
        ));
        let bad = PartitionSpec { rate_a: 1.0, ..ps };
        assert!(partition_pool(&pool, &bad).is_err());
    }

    #[test]
    fn waterbirds_expected_sizes() {
        let ps = PartitionSpec { rate_a: 0.5, rate_b: 0.5, rate_c: 0.5, seed: 0 };
        // cell-index order (0,0), (0,1), (1,0), (1,1)
        let sizes = [6220, 2905, 831, 1832];
        assert_eq!(ps.expected_source_sizes(sizes), [3110.0, 1452.5, 415.5, 0.0]);
    }

    #[test]
    fn truth_table_round_trip() {
        let t = vec![TruthRow { row_index: 3, y_true: 1 }, TruthRow { row_index: 9, y_true: 0 }];
        assert_eq!(parse_truth_csv(&truth_to_csv_string(&t)).unwrap(), t);
        assert!(parse_truth_csv("row_index,y_true\n1,2\n").is_err());
        assert!(parse_truth_csv("1\n").is_err());
    }
}
