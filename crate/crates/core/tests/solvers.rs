mod common;

use common::{randn_mat, randn_vec, reference_lasso, reference_prox, rng};
use lasso_exact::model::{build_ar_covariance, CovarianceModel};
use lasso_exact::solvers::{
    fixed_design_prox, lasso_kkt_residual, lasso_objective, smoothed_prox, soft_threshold, solve_lasso, solve_smoothed_lasso,
    SolverConfig,
};
use nalgebra::DVector;
use rand::Rng;

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        kkt_tol: 1e-9,
        ..Default::default()
    }
}

#[test]
fn lasso_matches_proximal_gradient_reference() {
    let mut r = rng(1);
    for case in 0..20 {
        let (n, p) = if case % 2 == 0 { (60, 30) } else { (40, 80) };
        let x = randn_mat(&mut r, n, p) / (n as f64).sqrt();
        let mut theta = DVector::zeros(p);
        for j in 0..6 {
            theta[j * 3] = if j % 2 == 0 { 2.0 } else { -1.0 };
        }
        let y = &x * &theta + randn_vec(&mut r, n) * 0.5;
        let lambda = r.random_range(0.2..1.5);
        let fit = solve_lasso(&x, &y, lambda, &tight(), None).unwrap();
        let reference = reference_lasso(&x, &y, lambda);
        let gap = (&fit.theta_hat - &reference).amax();
        assert!(gap < 1e-6, "case {case}: max diff {gap}");
        assert!(lasso_objective(&x, &y, &fit.theta_hat, lambda) <= lasso_objective(&x, &y, &reference, lambda) + 1e-12);
    }
}

#[test]
fn prox_matches_proximal_gradient_reference() {
    let mut r = rng(2);
    for case in 0..20 {
        let p = 25 + case;
        let m = build_ar_covariance(r.random_range(-0.7..0.8), p).unwrap();
        let y = randn_vec(&mut r, p) * 2.0;
        let zeta = r.random_range(0.2..1.0);
        let lambda = r.random_range(0.1..1.5);
        let fit = fixed_design_prox(&y, &m, lambda, zeta, &tight(), None).unwrap();
        let reference = reference_prox(&y, &m, lambda, zeta);
        let gap = (&fit.theta_hat - &reference).amax();
        assert!(gap < 1e-6, "case {case}: max diff {gap}");
    }
}

#[test]
fn kkt_on_random_instances() {
    let cfg = SolverConfig::default();
    let mut r = rng(3);
    for case in 0..100 {
        let n = r.random_range(10..80);
        let p = r.random_range(5..120);
        let x = randn_mat(&mut r, n, p) / (n as f64).sqrt();
        let y = randn_vec(&mut r, n) * 2.0;
        let lambda_max = x.tr_mul(&y).amax();
        let lambda = lambda_max * r.random_range(0.05..1.2);
        let fit = solve_lasso(&x, &y, lambda, &cfg, None).unwrap();
        assert!(fit.converged, "case {case}");
        assert!(lasso_kkt_residual(&x, &y, &fit.theta_hat, lambda) <= 1e-6, "case {case}");
    }
}

#[test]
fn smoothed_lasso_approaches_lasso() {
    let mut r = rng(4);
    let x = randn_mat(&mut r, 50, 30) / 50f64.sqrt();
    let y = randn_vec(&mut r, 50) * 2.0;
    let lasso = solve_lasso(&x, &y, 0.8, &tight(), None).unwrap().theta_hat;
    let mut last = f64::INFINITY;
    for alpha in [1e-1, 1e-2, 1e-3, 1e-4] {
        let s = solve_smoothed_lasso(&x, &y, 0.8, alpha, &tight(), None).unwrap();
        let d = (&s.theta_hat - &lasso).amax();
        assert!(d <= last + 1e-12);
        last = d;
    }
    assert!(last < 1e-3);
}

#[test]
fn identity_prox_is_soft_thresholding() {
    let mut r = rng(5);
    let m = CovarianceModel::identity(50);
    for _ in 0..100 {
        let y = randn_vec(&mut r, 50) * 3.0;
        let zeta = r.random_range(0.1..1.0);
        let lambda = r.random_range(0.1..2.0);
        let fit = fixed_design_prox(&y, &m, lambda, zeta, &SolverConfig::default(), None).unwrap();
        for j in 0..50 {
            assert!((fit.theta_hat[j] - soft_threshold(y[j], lambda / zeta)).abs() <= 1e-10);
        }
    }
}

#[test]
fn smoothed_prox_kkt_and_limit() {
    let m = build_ar_covariance(0.5, 30).unwrap();
    let mut r = rng(6);
    let y = randn_vec(&mut r, 30) * 2.0;
    let base = fixed_design_prox(&y, &m, 0.7, 0.6, &tight(), None).unwrap().theta_hat;
    for alpha in [1e-1, 1e-3, 1e-5] {
        let s = smoothed_prox(&y, &m, 0.7, 0.6, alpha, &tight(), None).unwrap();
        assert!(s.converged);
        assert!((&s.theta_hat - &base).amax() < 10.0 * alpha);
    }
}

#[test]
fn warm_start_reaches_same_solution() {
    let mut r = rng(7);
    let x = randn_mat(&mut r, 40, 60) / 40f64.sqrt();
    let y = randn_vec(&mut r, 40);
    let cold = solve_lasso(&x, &y, 0.3, &tight(), None).unwrap();
    let warm_from = DVector::from_element(60, 0.7);
    let warm = solve_lasso(&x, &y, 0.3, &tight(), Some(&warm_from)).unwrap();
    assert!((cold.theta_hat - warm.theta_hat).amax() < 1e-8);
}
