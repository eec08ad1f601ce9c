//! L2-regularized logistic regression.
//!
//! Every nuisance model in the pipeline is a [`ProbModel`] fitted here.
//! The criterion is the (optionally weighted) average logistic loss plus
//! `lambda / 2 * ||w||^2`, intercept unpenalized. Features are standardized
//! with training statistics that travel with the model, so the penalty acts
//! on standardized coefficients.
//!
//! The solver is full-batch Newton with Armijo backtracking. When the
//! Hessian cannot be factored the step falls back to steepest descent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FitError;

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

/// Anything that maps a feature vector to a probability.
pub trait Probability {
    fn prob(&self, x: &[f64]) -> f64;
}

impl<F> Probability for F
where
    F: Fn(&[f64]) -> f64,
{
    fn prob(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    pub clamp_eps: f64,
    pub standardize: bool,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            clamp_eps: DEFAULT_CLAMP_EPS,
            standardize: true,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl FitOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

/// Fitted linear-logit binary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbModel {
    pub lambda: f64,
    pub clamp_eps: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl ProbModel {
    /// Model acting directly on raw features (no standardization).
    pub fn from_parameters(weights: Vec<f64>, intercept: f64, clamp_eps: f64) -> Self {
        let q = weights.len();
        Self {
            lambda: 0.0,
            clamp_eps,
            mean: vec![0.0; q],
            scale: vec![1.0; q],
            weights,
            intercept,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Affine score `w . z + b` on standardized features.
    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut s = self.intercept;
        for (((xj, m), sc), w) in x.iter().zip(&self.mean).zip(&self.scale).zip(&self.weights) {
            s += w * (xj - m) / sc;
        }
        s
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, FitError> {
        if x.len() != self.dim() {
            return Err(FitError::DimensionMismatch {
                row: 0,
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.prob(x))
    }

    /// Coefficients mapped back to raw feature coordinates.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scale)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept - w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    /// Check the serialized form for internal consistency.
    pub fn check(&self) -> Result<(), String> {
        let q = self.weights.len();
        if q == 0 {
            return Err("model has no weights".into());
        }
        if self.mean.len() != q || self.scale.len() != q {
            return Err(format!(
                "mean/scale lengths ({}, {}) differ from weights ({q})",
                self.mean.len(),
                self.scale.len()
            ));
        }
        if !(0.0..0.5).contains(&self.clamp_eps) {
            return Err(format!("clamp_eps {} outside [0, 0.5)", self.clamp_eps));
        }
        let finite = self
            .mean
            .iter()
            .chain(&self.weights)
            .chain(std::iter::once(&self.intercept))
            .all(|v| v.is_finite());
        if !finite || self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err("model parameters must be finite with positive scales".into());
        }
        Ok(())
    }
}

impl Probability for ProbModel {
    fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x)).clamp(self.clamp_eps, 1.0 - self.clamp_eps)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Design matrix with a trailing column of ones.
fn design<R: AsRef<[f64]>>(rows: &[R], mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
    let q = mean.len();
    DMatrix::from_fn(rows.len(), q + 1, |i, j| {
        if j == q {
            1.0
        } else {
            (rows[i].as_ref()[j] - mean[j]) / scale[j]
        }
    })
}

struct Objective {
    z: DMatrix<f64>,
    y: DVector<f64>,
    /// Per-row weights normalized to sum to one.
    v: DVector<f64>,
    lambda: f64,
}

impl Objective {
    fn loss(&self, theta: &DVector<f64>) -> f64 {
        let s = &self.z * theta;
        let q = theta.len() - 1;
        let data: f64 = s
            .iter()
            .zip(self.y.iter())
            .zip(self.v.iter())
            .map(|((s, y), v)| v * (softplus(*s) - y * s))
            .sum();
        data + 0.5 * self.lambda * theta.rows(0, q).norm_squared()
    }

    fn loss_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let s = &self.z * theta;
        let q = theta.len() - 1;
        let mut loss = 0.0;
        let mut resid = DVector::zeros(s.len());
        let mut curv = DVector::zeros(s.len());
        for i in 0..s.len() {
            let p = sigmoid(s[i]);
            loss += self.v[i] * (softplus(s[i]) - self.y[i] * s[i]);
            resid[i] = self.v[i] * (p - self.y[i]);
            curv[i] = self.v[i] * p * (1.0 - p);
        }
        let mut grad = self.z.tr_mul(&resid);
        for j in 0..q {
            grad[j] += self.lambda * theta[j];
        }
        loss += 0.5 * self.lambda * theta.rows(0, q).norm_squared();
        (loss, grad, curv)
    }

    fn hessian(&self, curv: &DVector<f64>) -> DMatrix<f64> {
        let mut zw = self.z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= curv[i];
        }
        let mut h = self.z.tr_mul(&zw);
        let q = h.nrows() - 1;
        for j in 0..q {
            h[(j, j)] += self.lambda;
        }
        h
    }
}

fn check_inputs<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[bool],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<usize, FitError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(FitError::InvalidLambda(lambda));
    }
    if rows.is_empty() {
        return Err(FitError::EmptyInput);
    }
    if labels.len() != rows.len() {
        return Err(FitError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != rows.len() {
            return Err(FitError::LengthMismatch {
                rows: rows.len(),
                labels: w.len(),
            });
        }
    }
    let q = rows[0].as_ref().len();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != q {
            return Err(FitError::DimensionMismatch {
                row: i,
                expected: q,
                found: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite { row: i });
        }
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for (i, &y) in labels.iter().enumerate() {
        let w = match weights {
            Some(w) => {
                if !w[i].is_finite() {
                    return Err(FitError::NonFinite { row: i });
                }
                if w[i] < 0.0 {
                    return Err(FitError::NegativeWeight);
                }
                w[i]
            }
            None => 1.0,
        };
        if y {
            pos += w;
        } else {
            neg += w;
        }
    }
    if pos <= 0.0 || neg <= 0.0 {
        return Err(FitError::SingleClass);
    }
    Ok(q)
}

fn normalized_weights(n: usize, weights: Option<&[f64]>) -> DVector<f64> {
    match weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            DVector::from_iterator(n, w.iter().map(|v| v / total))
        }
        None => DVector::from_element(n, 1.0 / n as f64),
    }
}

/// Objective value and gradient of the fit criterion at `params`
/// (`q` slopes followed by the intercept), on features exactly as given.
///
/// Sample weights, when present, are normalized to sum to one, so the data
/// term is a weighted average.
pub fn loss_and_gradient<R: AsRef<[f64]>>(
    params: &[f64],
    rows: &[R],
    labels: &[bool],
    lambda: f64,
    sample_weights: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let q = params.len() - 1;
    let obj = Objective {
        z: design(rows, &vec![0.0; q], &vec![1.0; q]),
        y: DVector::from_iterator(labels.len(), labels.iter().map(|&y| y as u8 as f64)),
        v: normalized_weights(rows.len(), sample_weights),
        lambda,
    };
    let theta = DVector::from_column_slice(params);
    let (loss, grad, _) = obj.loss_grad(&theta);
    (loss, grad.iter().copied().collect())
}

fn standardization<R: AsRef<[f64]>>(rows: &[R], q: usize, enabled: bool) -> (Vec<f64>, Vec<f64>) {
    if !enabled {
        return (vec![0.0; q], vec![1.0; q]);
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; q];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; q];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Fit an L2-regularized logistic regression.
///
/// `sample_weights` are nonnegative per-row weights; multiplying all of them
/// by a common constant leaves the fit unchanged.
pub fn fit_logistic<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[bool],
    sample_weights: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<ProbModel, FitError> {
    let q = check_inputs(rows, labels, sample_weights, opts.lambda)?;
    let (mean, scale) = standardization(rows, q, opts.standardize);
    let obj = Objective {
        z: design(rows, &mean, &scale),
        y: DVector::from_iterator(labels.len(), labels.iter().map(|&y| y as u8 as f64)),
        v: normalized_weights(rows.len(), sample_weights),
        lambda: opts.lambda,
    };

    let mut theta = DVector::zeros(q + 1);
    let base = obj.v.dot(&obj.y);
    theta[q] = (base / (1.0 - base)).ln();

    let mut grad_norm = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (loss, grad, curv) = obj.loss_grad(&theta);
        grad_norm = grad.amax();
        if grad_norm < opts.tol {
            break;
        }
        let newton = obj.hessian(&curv).cholesky().map(|c| -c.solve(&grad));
        let mut stepped = false;
        for dir in newton.into_iter().chain(std::iter::once(-&grad)) {
            let slope = grad.dot(&dir);
            if slope.is_nan() || slope >= 0.0 {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let cand = &theta + t * &dir;
                let l = obj.loss(&cand);
                if l.is_finite() && l <= loss + 1e-4 * t * slope {
                    theta = cand;
                    stepped = true;
                    break;
                }
                // Near the optimum the decrease drops below the rounding
                // error of the loss; take the full step if it still shrinks
                // the gradient.
                if t == 1.0
                    && l.is_finite()
                    && l <= loss + 1e-12 * loss.abs().max(1.0)
                    && obj.loss_grad(&cand).1.amax() < grad_norm
                {
                    theta = cand;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
        }
        if !stepped {
            // No descent possible at machine precision.
            break;
        }
    }
    let (_, grad, _) = obj.loss_grad(&theta);
    grad_norm = grad_norm.min(grad.amax());
    if grad_norm >= opts.tol {
        return Err(FitError::NotConverged {
            iterations: opts.max_iter,
            grad_norm,
        });
    }

    Ok(ProbModel {
        lambda: opts.lambda,
        clamp_eps: opts.clamp_eps,
        mean,
        scale,
        weights: theta.rows(0, q).iter().copied().collect(),
        intercept: theta[q],
    })
}
