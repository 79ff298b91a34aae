//! ω*(ε): the identity-covariance width of a support of fraction ε, and its
//! inverse ε*(κ_cond, δ).

use crate::error::{Error, Result};
use crate::stats::{cdf, phi};

const ALPHA_TOL: f64 = 1e-13;

fn gap(a: f64) -> f64 {
    phi(a) - a * cdf(-a)
}

/// ε as a function of the internal threshold α; decreasing from 1 (α = 0) to 0.
pub fn eps_of_alpha(a: f64) -> f64 {
    let g = 2.0 * gap(a);
    g / (a + g)
}

/// ω*(ε)² as a function of (ε, α).
fn omega_sq(eps: f64, a: f64) -> f64 {
    eps + 2.0 * (1.0 - eps) * cdf(-a)
}

/// Solves ε = 2[φ(α) − αΦ(−α)] / (α + 2[φ(α) − αΦ(−α)]) for α by bisection.
pub fn alpha_of_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {eps}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while eps_of_alpha(hi) > eps {
        hi *= 2.0;
        if hi > 1e3 {
            break;
        }
    }
    while hi - lo > ALPHA_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if eps_of_alpha(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn omega_star(eps: f64) -> Result<f64> {
    let a = alpha_of_eps(eps)?;
    Ok(omega_sq(eps, a).sqrt())
}

/// ε*(κ_cond, δ) = sup{ε : ω*(ε) ≤ √(δ/κ_cond)}.
pub fn eps_star(kappa_cond: f64, delta: f64) -> Result<f64> {
    if !(kappa_cond >= 1.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need kappa_cond >= 1 and delta > 0, got ({kappa_cond}, {delta})"
        )));
    }
    let target = (delta / kappa_cond).sqrt();
    if target >= 1.0 {
        return Ok(1.0);
    }
    if target <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || mid >= 1.0 {
            break;
        }
        if omega_star(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
