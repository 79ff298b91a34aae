//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use lasso_exact::model::CovarianceModel;
use lasso_exact::stats::{cdf, phi};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn_vec(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn randn_mat(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn soft(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

fn top_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.max()
}

/// Accelerated proximal gradient for min ½θᵀHθ − bᵀθ + λ‖θ‖₁.
fn fista_quadratic(h: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, tol: f64, max_iter: usize) -> DVector<f64> {
    let p = b.len();
    let l = top_eigenvalue(h);
    let step = 1.0 / l;
    let mut x = DVector::<f64>::zeros(p);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let grad = h * &y - b;
        let xn = (&y - grad * step).map(|u| soft(u, lambda * step));
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = (&xn - &x).amax();
        // Restart when the momentum points uphill.
        let restart = (&y - &xn).dot(&(&xn - &x)) > 0.0;
        y = if restart { xn.clone() } else { &xn + (&xn - &x) * ((t - 1.0) / tn) };
        t = if restart { 1.0 } else { tn };
        x = xn;
        if moved < tol {
            break;
        }
    }
    x
}

/// Reference solution of (1/2n)‖y − Xθ‖² + (λ/n)‖θ‖₁.
pub fn reference_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let h = x.tr_mul(x);
    let b = x.tr_mul(y);
    fista_quadratic(&h, &b, lambda, 1e-13, 2_000_000)
}

/// Reference solution of (ζ/2)‖y^f − Σ^{1/2}θ‖² + λ‖θ‖₁.
pub fn reference_prox(y_f: &DVector<f64>, model: &CovarianceModel, lambda: f64, zeta: f64) -> DVector<f64> {
    let h = model.sigma() * zeta;
    let b = model.sqrt() * y_f * zeta;
    fista_quadratic(&h, &b, lambda, 1e-13, 2_000_000)
}

/// ∫ f(z) φ(z) dz over the real line, split at the given breakpoints.
pub fn gauss_expect(f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    // φ(15) ≈ 5e-50, so the truncation is far below any tolerance used here.
    let mut pts = vec![-15.0];
    let mut bs: Vec<f64> = breaks.iter().copied().chain([0.0]).filter(|b| b.abs() < 15.0).collect();
    bs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bs.dedup();
    pts.extend(bs);
    pts.push(15.0);
    pts.windows(2)
        .map(|w| quadrature::integrate(|z| f(z) * phi(z), w[0], w[1], 1e-15).integral)
        .sum()
}

/// Soft-thresholding MSE and nonzero probability by numerical quadrature.
pub fn soft_moments_quadrature(theta: f64, tau: f64, t: f64) -> (f64, f64) {
    let breaks = [(-t - theta) / tau, (t - theta) / tau];
    let mse = gauss_expect(|z| (soft(theta + tau * z, t) - theta).powi(2), &breaks);
    let nz = gauss_expect(|z| if soft(theta + tau * z, t) != 0.0 { 1.0 } else { 0.0 }, &breaks);
    (mse, nz)
}

/// Statistical dimension of the ℓ1 descent cone at an ε-sparse point, over p:
/// inf_{s ≥ 0} ε(1 + s²) + (1 − ε)·E[(|G| − s)₊²], evaluated by quadrature and
/// golden-section search.
pub fn l1_statistical_dimension(eps: f64) -> f64 {
    let obj = |s: f64| {
        let tail = gauss_expect(|z| if z.abs() > s { (z.abs() - s).powi(2) } else { 0.0 }, &[-s, s]);
        eps * (1.0 + s * s) + (1.0 - eps) * tail
    };
    let (mut a, mut b) = (0.0f64, 10.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if obj(c) < obj(d) {
            b = d;
        } else {
            a = c;
        }
    }
    obj(0.5 * (a + b))
}

/// Closed-form E[(|G| − s)₊²], used to cross-check the quadrature itself.
pub fn tail_second_moment(s: f64) -> f64 {
    2.0 * ((1.0 + s * s) * cdf(-s) - s * phi(s))
}
