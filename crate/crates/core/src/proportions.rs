//! Finite-dimensional parameters: source cell proportions, the target
//! background mass and the matched target proportions.
//!
//! The target land-background pair `(beta10, beta00)` is estimated either by
//! maximizing the empirical log-mixture objective (equivalent to minimizing
//! the KL divergence between the target a=0 feature law and the
//! `beta`-weighted mixture of the source a=0 class conditionals) or by
//! matching two moments. `beta01` needs a separate rule because only the
//! `(y=0, a=1)` component is observed in the source; we use the lower
//! quantile of the density-ratio proxy `(1 - kappa) / kappa` over target
//! a=1 rows.

use nalgebra::{DVector, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::classify::Probability;
use crate::dataset::{CellCounts, Dataset};
use crate::error::EstimationError;

/// Relative margin kept between the KL search interval and `[0, rho]`.
pub const KL_MARGIN: f64 = 1e-4;
pub const KL_SCAN_POINTS: usize = 256;
pub const KL_TOL: f64 = 1e-8;
pub const DEFAULT_ANCHOR_QUANTILE: f64 = 0.01;
/// Moment matrices with a larger condition number are rejected.
pub const MAX_MOMENT_CONDITION: f64 = 1e10;

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceProportions {
    pub alpha10: f64,
    pub alpha01: f64,
    pub alpha00: f64,
    pub pi: f64,
}

impl SourceProportions {
    pub fn new(alpha10: f64, alpha01: f64, alpha00: f64, pi: f64) -> Result<Self, EstimationError> {
        for (name, v) in [
            ("alpha10", alpha10),
            ("alpha01", alpha01),
            ("alpha00", alpha00),
            ("pi", pi),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(EstimationError::OutOfRange(name, v));
            }
        }
        let sum = alpha10 + alpha01 + alpha00;
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(EstimationError::Invariant(format!(
                "source alphas sum to {sum}"
            )));
        }
        Ok(Self {
            alpha10,
            alpha01,
            alpha00,
            pi,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetProportions {
    pub beta11: f64,
    pub beta10: f64,
    pub beta01: f64,
    pub beta00: f64,
    pub rho: f64,
    pub b1: f64,
}

impl TargetProportions {
    /// Assemble a block from the land pair and `beta01`; `rho` is
    /// `beta10 + beta00` and `beta11` takes the remaining water mass.
    pub fn from_parts(beta10: f64, beta00: f64, beta01: f64, b1: f64) -> Result<Self, EstimationError> {
        let rho = beta10 + beta00;
        let beta11 = ((1.0 - rho) - beta01).max(0.0);
        let tp = Self {
            beta11,
            beta10,
            beta01,
            beta00,
            rho,
            b1,
        };
        tp.check()?;
        Ok(tp)
    }

    pub fn check(&self) -> Result<(), EstimationError> {
        let all = [self.beta11, self.beta10, self.beta01, self.beta00];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(EstimationError::Invariant(format!(
                "negative or non-finite beta in {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(EstimationError::Invariant(format!("betas sum to {sum}")));
        }
        if (self.beta10 + self.beta00 - self.rho).abs() > SIMPLEX_TOL {
            return Err(EstimationError::Invariant(
                "beta10 + beta00 differs from rho".into(),
            ));
        }
        Ok(())
    }
}

/// Serialized proportion block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    pub alpha10: f64,
    pub alpha01: f64,
    pub alpha00: f64,
    pub pi: f64,
    pub beta11: f64,
    pub beta10: f64,
    pub beta01: f64,
    pub beta00: f64,
    pub rho: f64,
    pub b1: f64,
    pub method: String,
    pub warnings: Vec<String>,
}

impl ProportionReport {
    pub fn new(
        sp: &SourceProportions,
        tp: &TargetProportions,
        method: impl Into<String>,
        warnings: Vec<String>,
    ) -> Self {
        Self {
            alpha10: sp.alpha10,
            alpha01: sp.alpha01,
            alpha00: sp.alpha00,
            pi: sp.pi,
            beta11: tp.beta11,
            beta10: tp.beta10,
            beta01: tp.beta01,
            beta00: tp.beta00,
            rho: tp.rho,
            b1: tp.b1,
            method: method.into(),
            warnings,
        }
    }

    pub fn source(&self) -> Result<SourceProportions, EstimationError> {
        SourceProportions::new(self.alpha10, self.alpha01, self.alpha00, self.pi)
    }

    pub fn target(&self) -> Result<TargetProportions, EstimationError> {
        let tp = TargetProportions {
            beta11: self.beta11,
            beta10: self.beta10,
            beta01: self.beta01,
            beta00: self.beta00,
            rho: self.rho,
            b1: self.b1,
        };
        tp.check()?;
        Ok(tp)
    }
}

/// Estimated `(beta10, beta00)` pair with any diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub beta10: f64,
    pub beta00: f64,
    pub warnings: Vec<String>,
}

pub fn estimate_source_proportions(c: &CellCounts) -> Result<SourceProportions, EstimationError> {
    for (name, n) in [
        ("source (y=1, a=0)", c.n110),
        ("source (y=0, a=1)", c.n101),
        ("source (y=0, a=0)", c.n100),
        ("target", c.n0),
    ] {
        if n == 0 {
            return Err(EstimationError::EmptyCell(name));
        }
    }
    let n1 = (c.n110 + c.n101 + c.n100) as f64;
    let alpha10 = c.n110 as f64 / n1;
    let alpha01 = c.n101 as f64 / n1;
    // Complement keeps the simplex sum exact.
    let alpha00 = 1.0 - alpha10 - alpha01;
    let pi = n1 / (n1 + c.n0 as f64);
    SourceProportions::new(alpha10, alpha01, alpha00, pi)
}

/// `rho = pr(A=0 | R=0)` and `b1 = pr(Y=1 | R=1, A=0)`.
pub fn estimate_rho_b1(c: &CellCounts) -> Result<(f64, f64), EstimationError> {
    if c.n0 == 0 {
        return Err(EstimationError::EmptyCell("target"));
    }
    if c.n110 + c.n100 == 0 {
        return Err(EstimationError::EmptyCell("source a=0"));
    }
    let rho = c.n0_dot0 as f64 / c.n0 as f64;
    let b1 = c.n110 as f64 / (c.n110 + c.n100) as f64;
    Ok((rho, b1))
}

/// Empirical mean over target a=0 rows of
/// `log[xi0 / b1 * beta10 + (1 - xi0) / (1 - b1) * (rho - beta10)]`.
pub fn kl_objective(beta10: f64, xi0_vals: &[f64], b1: f64, rho: f64) -> Result<f64, EstimationError> {
    if xi0_vals.is_empty() {
        return Err(EstimationError::EmptyCell("target a=0"));
    }
    let c1 = beta10 / b1;
    let c0 = (rho - beta10) / (1.0 - b1);
    let mut sum = 0.0;
    for &p in xi0_vals {
        let arg = p * c1 + (1.0 - p) * c0;
        if arg.is_nan() || arg <= 0.0 {
            return Err(EstimationError::NonPositiveLog(beta10));
        }
        sum += arg.ln();
    }
    Ok(sum / xi0_vals.len() as f64)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

fn check_unit(name: &'static str, v: f64) -> Result<(), EstimationError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(EstimationError::OutOfRange(name, v))
    }
}

/// Maximize [`kl_objective`] over `beta10` given precomputed `xi0` values
/// on the target a=0 rows.
pub fn estimate_beta_kl_from_probs(
    xi0_vals: &[f64],
    b1: f64,
    rho: f64,
) -> Result<BetaEstimate, EstimationError> {
    if xi0_vals.is_empty() {
        return Err(EstimationError::EmptyCell("target a=0"));
    }
    check_unit("rho", rho)?;
    check_unit("b1", b1)?;

    let flat = BetaEstimate {
        beta10: 0.5 * rho,
        beta00: rho - 0.5 * rho,
        warnings: vec![
            "matching objective is flat; xi0 carries no information, returning rho/2".into(),
        ],
    };
    let first = xi0_vals[0];
    if xi0_vals.iter().all(|v| (v - first).abs() <= 1e-12) {
        return Ok(flat);
    }

    let lo = KL_MARGIN * rho;
    let hi = (1.0 - KL_MARGIN) * rho;
    let step = (hi - lo) / (KL_SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KL_SCAN_POINTS).map(|i| lo + step * i as f64).collect();
    let mut values = Vec::with_capacity(KL_SCAN_POINTS);
    for &b in &grid {
        values.push(kl_objective(b, xi0_vals, b1, rho)?);
    }
    let (best, fmax) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let fmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    if fmax - fmin <= 1e-12 {
        return Ok(flat);
    }

    let left = grid[best.saturating_sub(1)];
    let right = grid[(best + 1).min(KL_SCAN_POINTS - 1)];
    let objective = |b: f64| kl_objective(b, xi0_vals, b1, rho).unwrap_or(f64::NEG_INFINITY);
    let mut beta10 = golden_section_max(objective, left, right, KL_TOL);
    // Golden section returns the bracket midpoint; keep whichever of it and
    // the scan point scores higher.
    if objective(beta10) < fmax {
        beta10 = grid[best];
    }
    let mut warnings = Vec::new();
    if best == 0 || best == KL_SCAN_POINTS - 1 {
        warnings.push(format!(
            "beta10 estimate {beta10:.6} sits on the search boundary"
        ));
    }
    Ok(BetaEstimate {
        beta10,
        beta00: rho - beta10,
        warnings,
    })
}

/// KL distribution-matching estimate of `(beta10, beta00)` using a fitted
/// `xi0` evaluated on the target a=0 rows.
pub fn estimate_beta_kl<P: Probability + ?Sized>(
    xi0: &P,
    target_a0: &Dataset,
    b1: f64,
    rho: f64,
) -> Result<BetaEstimate, EstimationError> {
    let vals: Vec<f64> = target_a0.iter().map(|s| xi0.prob(s.features())).collect();
    estimate_beta_kl_from_probs(&vals, b1, rho)
}

/// Moment function `m(x) = (1, g(x))` used by the moment-matching estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MomentSpec {
    /// `g(x) = x[j]`.
    Coordinate(usize),
    /// `g(x) = d . x`.
    Direction(Vec<f64>),
    /// `g(x)` is the first principal coordinate of the pooled a=0 features.
    PrincipalAxis,
}

impl MomentSpec {
    fn direction(&self, q: usize, pooled: &[&[f64]]) -> Result<Vec<f64>, EstimationError> {
        match self {
            MomentSpec::Coordinate(j) => {
                if *j >= q {
                    return Err(EstimationError::Invariant(format!(
                        "moment coordinate {j} out of range for q = {q}"
                    )));
                }
                let mut d = vec![0.0; q];
                d[*j] = 1.0;
                Ok(d)
            }
            MomentSpec::Direction(d) => {
                if d.len() != q {
                    return Err(EstimationError::Invariant(format!(
                        "moment direction has length {}, expected {q}",
                        d.len()
                    )));
                }
                Ok(d.clone())
            }
            MomentSpec::PrincipalAxis => Ok(principal_axis(pooled, q)),
        }
    }
}

fn principal_axis(rows: &[&[f64]], q: usize) -> Vec<f64> {
    let n = rows.len().max(1) as f64;
    let mut mean = DVector::zeros(q);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = nalgebra::DMatrix::zeros(q, q);
    for r in rows {
        let d = DVector::from_column_slice(r) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    // Fix the sign so the direction is deterministic.
    if let Some(lead) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if lead < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
    v
}

fn condition_number(m: &Matrix2<f64>) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `rho^{-1} [m10, m00] beta = target` for `beta = (beta10, beta00)`,
/// where `m10`, `m00` are the source-cell moment vectors and `target` the
/// target a=0 moment vector. Negative components are clipped and the pair
/// rescaled so it sums to `rho`.
pub fn solve_moment_system(
    m10: [f64; 2],
    m00: [f64; 2],
    target: [f64; 2],
    rho: f64,
) -> Result<BetaEstimate, EstimationError> {
    check_unit("rho", rho)?;
    let m = Matrix2::new(m10[0], m00[0], m10[1], m00[1]);
    let cond = condition_number(&m);
    if !(cond.is_finite() && cond <= MAX_MOMENT_CONDITION) {
        return Err(EstimationError::Identifiability(cond));
    }
    let sol = m
        .lu()
        .solve(&Vector2::new(target[0], target[1]))
        .ok_or(EstimationError::Identifiability(f64::INFINITY))?;
    let (mut b10, mut b00) = (rho * sol[0], rho * sol[1]);
    let mut warnings = Vec::new();
    if b10 < 0.0 || b00 < 0.0 {
        warnings.push(format!(
            "moment solution ({b10:.6}, {b00:.6}) left the simplex; clipped and rescaled"
        ));
        b10 = b10.max(0.0);
        b00 = b00.max(0.0);
    }
    let total = b10 + b00;
    if total.is_nan() || total <= 0.0 {
        return Err(EstimationError::Identifiability(cond));
    }
    let beta10 = rho * b10 / total;
    Ok(BetaEstimate {
        beta10,
        beta00: rho - beta10,
        warnings,
    })
}

fn mean_moment(rows: &[&[f64]], dir: &[f64]) -> [f64; 2] {
    let n = rows.len() as f64;
    let g: f64 = rows
        .iter()
        .map(|r| r.iter().zip(dir).map(|(x, d)| x * d).sum::<f64>())
        .sum::<f64>()
        / n;
    [1.0, g]
}

/// Moment-matching estimate of `(beta10, beta00)` from the source a=0 cells
/// and the target a=0 rows.
pub fn estimate_beta_moment(
    moments: &MomentSpec,
    source: &Dataset,
    target_a0: &Dataset,
    rho: f64,
) -> Result<BetaEstimate, EstimationError> {
    let s10 = source.subset(|k| k.r == 1 && k.y == Some(1) && k.a == 0);
    let s00 = source.subset(|k| k.r == 1 && k.y == Some(0) && k.a == 0);
    if s10.is_empty() {
        return Err(EstimationError::EmptyCell("source (y=1, a=0)"));
    }
    if s00.is_empty() {
        return Err(EstimationError::EmptyCell("source (y=0, a=0)"));
    }
    if target_a0.is_empty() {
        return Err(EstimationError::EmptyCell("target a=0"));
    }
    let rows10 = s10.rows();
    let rows00 = s00.rows();
    let rows_t = target_a0.rows();
    let pooled: Vec<&[f64]> = rows10
        .iter()
        .chain(&rows00)
        .chain(&rows_t)
        .copied()
        .collect();
    let dir = moments.direction(source.q(), &pooled)?;
    solve_moment_system(
        mean_moment(&rows10, &dir),
        mean_moment(&rows00, &dir),
        mean_moment(&rows_t, &dir),
        rho,
    )
}

/// Lower empirical quantile: the element at rank `floor(q * (n - 1))`.
fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Anchor-set estimate of `(beta01, beta11)`.
///
/// `(1 - kappa) / kappa` is proportional to `beta01 + beta11 * p11/p01`, so
/// its lower quantile over target a=1 rows (scaled by
/// `alpha01 * pi / (1 - pi)`) approaches `beta01` from above as the quantile
/// enters a region where the `(1,1)` component has no mass. The result is
/// capped into `[0, 1 - rho]`.
pub fn estimate_beta01_anchor<P: Probability + ?Sized>(
    kappa: &P,
    target_a1: &Dataset,
    alpha01: f64,
    pi: f64,
    rho: f64,
    quantile: f64,
) -> Result<(f64, f64), EstimationError> {
    if target_a1.is_empty() {
        return Err(EstimationError::EmptyCell("target a=1"));
    }
    check_unit("alpha01", alpha01)?;
    check_unit("pi", pi)?;
    if !(0.0..=1.0).contains(&quantile) {
        return Err(EstimationError::OutOfRange("quantile", quantile));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(EstimationError::OutOfRange("rho", rho));
    }
    let kappas: Vec<f64> = target_a1.iter().map(|s| kappa.prob(s.features())).collect();
    const FLOOR: f64 = 1e-6 * (1.0 + 1e-9);
    if kappas.iter().all(|&k| k <= FLOOR) {
        return Err(EstimationError::DegenerateKappa);
    }
    let mut ratios: Vec<f64> = kappas
        .iter()
        .map(|&k| {
            let k = k.clamp(1e-300, 1.0);
            (1.0 - k) / k
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let cap = 1.0 - rho;
    let beta01 = (alpha01 * pi / (1.0 - pi) * lower_quantile(&ratios, quantile)).clamp(0.0, cap);
    Ok((beta01, cap - beta01))
}
