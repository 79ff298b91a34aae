//! Exact risk and degrees of freedom when Σ = I, where the fixed-design
//! estimator is entrywise soft thresholding at λ/ζ.

use nalgebra::DVector;

use super::{RiskDfEstimate, RiskDfMap};
use crate::stats::{cdf, phi};

/// E[(η_soft(θ + τG; t) − θ)²] and P(η_soft(θ + τG; t) ≠ 0) for one coordinate.
pub fn soft_threshold_moments(theta: f64, tau: f64, t: f64) -> (f64, f64) {
    if tau == 0.0 {
        let out = if theta.abs() > t { theta - t * theta.signum() } else { 0.0 };
        let err = out - theta;
        return (err * err, if theta.abs() > t { 1.0 } else { 0.0 });
    }
    // Upper branch: θ + τG > t  ⇔  G > u; error τG − t.
    // Lower branch: θ + τG < −t ⇔  G < −v; error τG + t.
    let u = (t - theta) / tau;
    let v = (t + theta) / tau;
    let tail = |w: f64| {
        let pw = cdf(-w);
        (tau * tau + t * t) * pw + tau * tau * w * phi(w) - 2.0 * tau * t * phi(w)
    };
    let p_up = cdf(-u);
    let p_down = cdf(-v);
    let p_zero = (1.0 - p_up - p_down).max(0.0);
    let mse = tail(u) + tail(v) + theta * theta * p_zero;
    (mse.max(0.0), p_up + p_down)
}

/// R and df for Σ = I with aspect ratio δ = n/p. Exact, so standard errors are zero.
pub fn risk_df_identity_closed_form(theta_star: &DVector<f64>, lambda: f64, tau: f64, zeta: f64, delta: f64) -> RiskDfEstimate {
    let n = delta * theta_star.len() as f64;
    identity_risk_df(theta_star, lambda, tau, zeta, n)
}

fn identity_risk_df(theta_star: &DVector<f64>, lambda: f64, tau: f64, zeta: f64, n: f64) -> RiskDfEstimate {
    let t = lambda / zeta;
    let (mut risk, mut df) = (0.0, 0.0);
    for &th in theta_star.iter() {
        let (m, q) = soft_threshold_moments(th, tau, t);
        risk += m;
        df += q;
    }
    RiskDfEstimate {
        risk: risk / n,
        df: df / n,
        se_risk: 0.0,
        se_df: 0.0,
        cov_risk_df: 0.0,
        n_mc: 0,
        flagged: 0,
    }
}

/// The closed-form map as a [`RiskDfMap`] for the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct IdentityClosedForm {
    pub theta_star: DVector<f64>,
    pub lambda: f64,
    pub n: usize,
}

impl RiskDfMap for IdentityClosedForm {
    fn evaluate(&mut self, tau: f64, zeta: f64) -> RiskDfEstimate {
        identity_risk_df(&self.theta_star, self.lambda, tau, zeta, self.n as f64)
    }
}
