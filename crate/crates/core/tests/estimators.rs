//! Proportion estimators against brute-force and Monte-Carlo oracles on
//! the four-Gaussian design.

use subpop_core::adapt::Nuisances;
use subpop_core::dataset::Dataset;
use subpop_core::proportions::{
    estimate_beta01_anchor, estimate_beta_kl_from_probs, estimate_beta_moment, kl_objective,
    solve_moment_system, MomentSpec,
};
use subpop_core::synthgen::{generate, oracle_spec, CellMeans, SyntheticSpec};

fn grid_argmax(vals: &[f64], b1: f64, rho: f64, points: usize) -> f64 {
    let lo = 1e-4 * rho;
    let hi = (1.0 - 1e-4) * rho;
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 0..points {
        let b = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let v = kl_objective(b, vals, b1, rho).unwrap();
        if v > best.0 {
            best = (v, b);
        }
    }
    best.1
}

#[test]
fn kl_matches_exhaustive_grid() {
    for seed in 0..5 {
        let spec = SyntheticSpec::new(600, 600, 100 + seed);
        let data = generate(&spec).unwrap();
        let oracle = oracle_spec(&spec);
        let vals: Vec<f64> = data
            .dataset
            .iter()
            .filter(|s| !s.is_source() && s.a() == 0)
            .map(|s| oracle.xi0(s.features()))
            .collect();
        let est = estimate_beta_kl_from_probs(&vals, 0.5, 0.5).unwrap();
        let grid = grid_argmax(&vals, 0.5, 0.5, 100_000);
        assert!((est.beta10 - grid).abs() < 1e-4, "{} vs {grid}", est.beta10);
        assert_eq!(est.beta10 + est.beta00, 0.5);
    }
}

#[test]
fn kl_invariant_to_permutation_and_duplication() {
    let spec = SyntheticSpec::new(400, 400, 5);
    let data = generate(&spec).unwrap();
    let oracle = oracle_spec(&spec);
    let vals: Vec<f64> = data
        .dataset
        .iter()
        .filter(|s| !s.is_source() && s.a() == 0)
        .map(|s| oracle.xi0(s.features()))
        .collect();
    let base = estimate_beta_kl_from_probs(&vals, 0.5, 0.5).unwrap().beta10;
    let mut rev = vals.clone();
    rev.reverse();
    let mut dup = vals.clone();
    dup.extend_from_slice(&vals);
    for v in [rev, dup] {
        let b = estimate_beta_kl_from_probs(&v, 0.5, 0.5).unwrap().beta10;
        assert!((b - base).abs() < 1e-8);
    }
}

#[test]
fn kl_consistent_with_oracle_xi0() {
    let mut err = 0.0;
    for seed in 0..20 {
        let spec = SyntheticSpec::new(100, 8000, 1000 + seed);
        let data = generate(&spec).unwrap();
        let oracle = oracle_spec(&spec);
        let vals: Vec<f64> = data
            .dataset
            .iter()
            .filter(|s| !s.is_source() && s.a() == 0)
            .map(|s| oracle.xi0(s.features()))
            .collect();
        err += (estimate_beta_kl_from_probs(&vals, 0.5, 0.5).unwrap().beta10 - 0.25).abs();
    }
    assert!(err / 20.0 <= 0.03, "mean error {}", err / 20.0);
}

#[test]
fn anchor_rule_recovers_beta01_with_oracle_kappa() {
    let mut err = 0.0;
    for seed in 0..20 {
        let spec = SyntheticSpec::new(8000, 8000, 2000 + seed);
        let data = generate(&spec).unwrap();
        let oracle = oracle_spec(&spec);
        let target_a1 = data.dataset.subset(|k| k.r == 0 && k.a == 1);
        let kappa = |x: &[f64]| oracle.kappa(x);
        let (b01, b11) =
            estimate_beta01_anchor(&kappa, &target_a1, 1.0 / 3.0, spec.pi(), 0.5, 0.01).unwrap();
        assert!((b01 + b11 - 0.5).abs() < 1e-12);
        err += (b01 - 0.25).abs();
    }
    assert!(err / 20.0 <= 0.05, "mean error {}", err / 20.0);
}

/// Population moment of `g(x) = d . x` under N(mu, I): just `d . mu`.
fn population_moment(mu: &[f64], d: &[f64]) -> [f64; 2] {
    [1.0, mu.iter().zip(d).map(|(a, b)| a * b).sum()]
}

#[test]
fn moment_matching_exact_with_population_inputs() {
    let means = CellMeans::default();
    let (beta10, beta00) = (0.25, 0.25);
    let rho = beta10 + beta00;
    for d in [vec![0.0, 1.0, 0.0, 0.0], vec![-1.0, 1.0, 0.0, 0.0], vec![0.3, 2.0, -1.0, 4.0]] {
        let m10 = population_moment(&means.m10, &d);
        let m00 = population_moment(&means.m00, &d);
        let target = [1.0, (beta10 * m10[1] + beta00 * m00[1]) / rho];
        let est = solve_moment_system(m10, m00, target, rho).unwrap();
        assert!((est.beta10 - 0.25).abs() < 1e-10);
        assert!((est.beta00 - 0.25).abs() < 1e-10);
    }
}

#[test]
fn moment_matching_on_samples_is_close() {
    let spec = SyntheticSpec::new(8000, 8000, 9);
    let data = generate(&spec).unwrap();
    let target_a0 = data.dataset.subset(|k| k.r == 0 && k.a == 0);
    let rho = target_a0.len() as f64 / 8000.0;
    for m in [MomentSpec::Coordinate(1), MomentSpec::PrincipalAxis] {
        let est = estimate_beta_moment(&m, &data.dataset, &target_a0, rho).unwrap();
        assert!((est.beta10 - 0.25).abs() < 0.03, "{m:?}: {}", est.beta10);
        assert_eq!(est.beta10 + est.beta00, rho);
    }
    // Coordinates 3 and 4 carry no information about the land cells.
    let err = estimate_beta_moment(&MomentSpec::Direction(vec![0.0; 4]), &data.dataset, &target_a0, rho);
    assert!(err.is_err());
}

#[test]
fn empty_target_subset_errors() {
    let spec = SyntheticSpec::new(50, 50, 1);
    let data = generate(&spec).unwrap();
    let empty = Dataset::empty(4);
    assert!(estimate_beta_moment(&MomentSpec::Coordinate(1), &data.dataset, &empty, 0.5).is_err());
    let oracle = oracle_spec(&spec);
    let kappa = |x: &[f64]| oracle.kappa(x);
    assert!(estimate_beta01_anchor(&kappa, &empty, 0.3, 0.5, 0.5, 0.01).is_err());
}
