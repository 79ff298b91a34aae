mod common;

use common::{randn_vec, rng};
use lasso_exact::fixed_point::omega_star;
use lasso_exact::model::{build_ar_covariance, CovarianceModel};
use lasso_exact::seed::SeedSpec;
use lasso_exact::width::{draw_width_gaussian, estimate_width, sample_width, ConeSpec, WidthConfig};
use nalgebra::DVector;

/// dist(g, K°)/√p for Σ = I:
/// min_{t ≥ 0} Σ_S (g_j − t x_j)² + Σ_{S^c} (|g_j| − t)₊², by golden section.
fn identity_width_oracle(x: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let obj = |t: f64| -> f64 {
        x.iter()
            .zip(g.iter())
            .map(|(&xj, &gj)| if xj != 0.0 { (gj - t * xj).powi(2) } else { (gj.abs() - t).max(0.0).powi(2) })
            .sum()
    };
    let (mut a, mut b) = (0.0f64, g.amax() + 1.0);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if obj(c) < obj(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (obj(0.5 * (a + b)).sqrt()) / (g.len() as f64).sqrt()
}

fn signs(p: usize, s: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| if j < s { if j % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 })
}

#[test]
fn identity_samples_match_projection_oracle() {
    let p = 150;
    let m = CovarianceModel::identity(p);
    let x = signs(p, 30);
    let cone = ConeSpec::new(x.clone(), &m).unwrap();
    let cfg = WidthConfig::default();
    let mut r = rng(1);
    for _ in 0..20 {
        let g = randn_vec(&mut r, p);
        let s = sample_width(&cone, &g, &cfg).unwrap();
        let o = identity_width_oracle(&x, &g);
        assert!(s.converged && s.feasible);
        assert!((s.value - o).abs() < 1e-5 * o, "{} vs {o}", s.value);
    }
}

#[test]
fn ar_samples_certified() {
    let p = 120;
    let m = build_ar_covariance(0.5, p).unwrap();
    let cone = ConeSpec::new(signs(p, 24), &m).unwrap();
    let cfg = WidthConfig::default();
    for i in 0..10 {
        let g = draw_width_gaussian(&SeedSpec::new(4), i, p);
        let s = sample_width(&cone, &g, &cfg).unwrap();
        assert!(s.converged, "sample {i} after {} iterations", s.iterations);
        assert!(s.value >= 0.0 && s.value <= s.upper);
        assert!(s.ball_violation <= cfg.feas_tol);
        assert!(s.cone_violation <= cfg.feas_tol);
        assert!((s.v.dot(&g) / p as f64 - s.value).abs() < 1e-12);
    }
}

#[test]
fn identity_mean_tracks_omega_star() {
    let p = 300;
    let m = CovarianceModel::identity(p);
    let cone = ConeSpec::new(signs(p, 30), &m).unwrap();
    let est = estimate_width(&cone, 150, &SeedSpec::new(2), &WidthConfig::default()).unwrap();
    let w = omega_star(0.1).unwrap();
    assert!((est.median / w - 1.0).abs() < 0.05);
    assert!(!est.unreliable);
    assert!((est.p_median_sq - p as f64 * est.median * est.median).abs() < 1e-9);
}

#[test]
fn correlation_changes_width() {
    // Same support, AR covariance: the estimate is finite, positive and below 1.
    let p = 200;
    let m = build_ar_covariance(0.5, p).unwrap();
    let cone = ConeSpec::new(signs(p, 40), &m).unwrap();
    let est = estimate_width(&cone, 40, &SeedSpec::new(3), &WidthConfig::default()).unwrap();
    assert!(est.median > 0.0 && est.median < 1.0);
    assert_eq!(est.flagged, 0);
}

#[test]
fn width_csv_header() {
    let p = 20;
    let m = CovarianceModel::identity(p);
    let cone = ConeSpec::new(signs(p, 4), &m).unwrap();
    let est = estimate_width(&cone, 3, &SeedSpec::new(1), &WidthConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    est.write_csv(&path, p).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sample_idx,value,p_times_value_sq,feasible,iterations");
    assert_eq!(text.lines().count(), 4);
}
