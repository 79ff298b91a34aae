//! The (τ*, ζ*) fixed point of
//!
//! ```text
//! τ² = σ² + R(τ², ζ)
//! ζ  = 1 − df(τ², ζ)
//! ```
//!
//! where R and df are the in-sample prediction risk and degrees of freedom of
//! the fixed-design estimator. For general Σ both are sample averages over
//! Gaussian draws ([`RiskDfEngine`]); for Σ = I they have closed forms
//! ([`IdentityClosedForm`]). Both plug into the same damped iteration.

mod closed_form;
mod monte_carlo;
mod omega;

use std::path::Path;

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub use closed_form::{risk_df_identity_closed_form, soft_threshold_moments, IdentityClosedForm};
pub use monte_carlo::{estimate_risk_df, summarize, DrawValue, RiskDfEngine};
pub use omega::{alpha_of_eps, eps_of_alpha, eps_star, omega_star};

use crate::error::{Error, Result};
use crate::model::CovarianceModel;
use crate::seed::SeedSpec;
use crate::solvers::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDfEstimate {
    pub risk: f64,
    pub df: f64,
    pub se_risk: f64,
    pub se_df: f64,
    /// Covariance of the two sample means.
    pub cov_risk_df: f64,
    pub n_mc: usize,
    /// Draws whose prox solve hit `max_iter`.
    pub flagged: usize,
}

/// Anything that can evaluate (R, df) at a given (τ, ζ).
pub trait RiskDfMap {
    fn evaluate(&mut self, tau: f64, zeta: f64) -> RiskDfEstimate;

    /// Increase the Monte Carlo sample size. Returns false when already at the maximum.
    fn grow(&mut self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub damping: f64,
    pub fp_tol: f64,
    pub max_outer: usize,
    pub zeta_floor: f64,
    /// Initial Monte Carlo sample size.
    pub n_mc: usize,
    /// Sample size reached by ×`growth` steps once the iteration settles.
    pub n_mc_max: usize,
    pub growth: usize,
    /// Relative step for the finite-difference Jacobian used in the standard errors.
    pub fd_step: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            fp_tol: 1e-4,
            max_outer: 2000,
            zeta_floor: 1e-3,
            n_mc: 400,
            n_mc_max: 6400,
            growth: 4,
            fd_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub tau: f64,
    pub zeta: f64,
    pub risk: f64,
    pub df: f64,
    pub se_risk: f64,
    pub se_df: f64,
    pub n_mc: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub tau_star: f64,
    pub zeta_star: f64,
    pub iterations: usize,
    /// |τ² − σ² − R| at the accepted point.
    pub tau_residual: f64,
    /// |ζ − 1 + df| at the accepted point.
    pub zeta_residual: f64,
    /// Delta-method Monte Carlo standard errors (zero for closed-form maps).
    pub se_tau: f64,
    pub se_zeta: f64,
    pub estimate: RiskDfEstimate,
    /// ζ sat on the floor for several consecutive iterations.
    pub zeta_floor_hit: bool,
    pub config: FixedPointConfig,
    pub trace: Vec<TraceRow>,
}

/// Damped fixed-point iteration on any (R, df) map.
///
/// Starts at τ₀² = σ² + ‖Σ^{1/2}θ*‖²/n (the λ → ∞ limit, passed as `tau0_sq`)
/// and ζ₀ = 1.
pub fn iterate_fixed_point<M: RiskDfMap>(
    map: &mut M,
    sigma_noise: f64,
    tau0_sq: f64,
    cfg: &FixedPointConfig,
) -> Result<FixedPointSolution> {
    if !(sigma_noise > 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be > 0, got {sigma_noise}")));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) || !(cfg.fp_tol > 0.0) || !(cfg.zeta_floor > 0.0 && cfg.zeta_floor < 1.0) {
        return Err(Error::InvalidParameter("invalid fixed-point configuration".into()));
    }
    let s2 = sigma_noise * sigma_noise;
    let gamma = cfg.damping;
    let mut tau2 = tau0_sq.max(s2);
    let mut zeta = 1.0f64;
    let mut trace = Vec::new();
    let mut floor_streak = 0usize;
    let mut floor_hit = false;

    for iter in 0..cfg.max_outer {
        let tau = tau2.sqrt();
        let est = map.evaluate(tau, zeta);
        trace.push(TraceRow {
            iter,
            tau,
            zeta,
            risk: est.risk,
            df: est.df,
            se_risk: est.se_risk,
            se_df: est.se_df,
            n_mc: est.n_mc,
        });
        let res_tau = (tau2 - s2 - est.risk).abs();
        let res_zeta = (zeta - 1.0 + est.df).abs();
        // Before the final sample size, Monte Carlo error dominates fp_tol.
        let stage_tol = cfg.fp_tol.max(est.se_risk.max(est.se_df));
        if res_tau < stage_tol && res_zeta < stage_tol {
            if map.grow() {
                continue;
            }
            if res_tau < cfg.fp_tol && res_zeta < cfg.fp_tol {
                let (se_tau, se_zeta) = delta_method_se(map, tau2, zeta, s2, &est, cfg);
                if floor_hit {
                    log::warn!("zeta hit the floor {}; the sample size may be below the cone width threshold", cfg.zeta_floor);
                }
                return Ok(FixedPointSolution {
                    tau_star: tau,
                    zeta_star: zeta,
                    iterations: iter + 1,
                    tau_residual: res_tau,
                    zeta_residual: res_zeta,
                    se_tau,
                    se_zeta,
                    estimate: est,
                    zeta_floor_hit: floor_hit,
                    config: *cfg,
                    trace,
                });
            }
        }
        tau2 = (1.0 - gamma) * tau2 + gamma * (s2 + est.risk);
        let raw = (1.0 - gamma) * zeta + gamma * (1.0 - est.df);
        zeta = raw.clamp(cfg.zeta_floor, 1.0);
        if raw <= cfg.zeta_floor {
            floor_streak += 1;
            if floor_streak >= 5 {
                floor_hit = true;
            }
        } else {
            floor_streak = 0;
        }
    }
    let last = trace.last().copied().expect("max_outer >= 1");
    Err(Error::FixedPointNonConvergence {
        iterations: cfg.max_outer,
        tau_residual: (last.tau * last.tau - s2 - last.risk).abs(),
        zeta_residual: (last.zeta - 1.0 + last.df).abs(),
        trace,
    })
}

/// Propagates the Monte Carlo covariance of (R̂, d̂f) through the fixed point:
/// Cov(u*) ≈ (I − J)⁻¹ C (I − J)⁻ᵀ with u = (τ², ζ) and J the Jacobian of the
/// map u ↦ (σ² + R(u), 1 − df(u)), by central differences on the same draws.
fn delta_method_se<M: RiskDfMap>(
    map: &mut M,
    tau2: f64,
    zeta: f64,
    s2: f64,
    at: &RiskDfEstimate,
    cfg: &FixedPointConfig,
) -> (f64, f64) {
    if at.se_risk == 0.0 && at.se_df == 0.0 {
        return (0.0, 0.0);
    }
    let h_t = cfg.fd_step * tau2;
    let h_z = cfg.fd_step * zeta;
    let f = |map: &mut M, t2: f64, z: f64| {
        let e = map.evaluate(t2.sqrt(), z);
        Vector2::new(s2 + e.risk, 1.0 - e.df)
    };
    let dt = (f(map, tau2 + h_t, zeta) - f(map, tau2 - h_t, zeta)) / (2.0 * h_t);
    let dz = (f(map, tau2, zeta + h_z) - f(map, tau2, zeta - h_z)) / (2.0 * h_z);
    // Restore warm starts at the accepted point.
    map.evaluate(tau2.sqrt(), zeta);
    let j = Matrix2::new(dt[0], dz[0], dt[1], dz[1]);
    let c = Matrix2::new(
        at.se_risk * at.se_risk,
        -at.cov_risk_df,
        -at.cov_risk_df,
        at.se_df * at.se_df,
    );
    let Some(inv) = (Matrix2::identity() - j).try_inverse() else {
        return (f64::NAN, f64::NAN);
    };
    let cov = inv * c * inv.transpose();
    let se_tau2 = cov[(0, 0)].max(0.0).sqrt();
    (se_tau2 / (2.0 * tau2.sqrt()), cov[(1, 1)].max(0.0).sqrt())
}

/// Monte Carlo fixed point for general Σ (α > 0 gives the smoothed equations).
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_point(
    theta_star: &DVector<f64>,
    model: &CovarianceModel,
    n: usize,
    lambda: f64,
    sigma_noise: f64,
    cfg: &FixedPointConfig,
    seed: SeedSpec,
    alpha: f64,
    solver: &SolverConfig,
) -> Result<FixedPointSolution> {
    let mut engine = RiskDfEngine::new(theta_star, model, n, lambda, alpha, cfg.n_mc, seed, *solver)?
        .with_growth(cfg.growth, cfg.n_mc_max);
    let signal = theta_star.dot(&(model.sigma() * theta_star)) / n as f64;
    iterate_fixed_point(&mut engine, sigma_noise, sigma_noise * sigma_noise + signal, cfg)
}

/// Closed-form fixed point for Σ = I.
pub fn solve_fixed_point_identity(
    theta_star: &DVector<f64>,
    n: usize,
    lambda: f64,
    sigma_noise: f64,
    cfg: &FixedPointConfig,
) -> Result<FixedPointSolution> {
    let mut map = IdentityClosedForm {
        theta_star: theta_star.clone(),
        lambda,
        n,
    };
    let signal = theta_star.norm_squared() / n as f64;
    iterate_fixed_point(&mut map, sigma_noise, sigma_noise * sigma_noise + signal, cfg)
}

/// Writes the iteration trace as `iter,tau,zeta,risk,df,se_risk,se_df`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "tau", "zeta", "risk", "df", "se_risk", "se_df"])?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.tau.to_string(),
            r.zeta.to_string(),
            r.risk.to_string(),
            r.df.to_string(),
            r.se_risk.to_string(),
            r.se_df.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_model_fixed_point() {
        let p = 50;
        let th = DVector::zeros(p);
        let sol = solve_fixed_point_identity(&th, 25, 1e6, 1.0, &FixedPointConfig::default()).unwrap();
        assert!((sol.tau_star - 1.0).abs() < 1e-12);
        assert!((sol.zeta_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_fixed_point_satisfies_equations() {
        let p = 200;
        let mut th = DVector::zeros(p);
        for j in 0..20 {
            th[j] = if j % 2 == 0 { 3.0 } else { -3.0 };
        }
        let cfg = FixedPointConfig { fp_tol: 1e-10, ..Default::default() };
        let sol = solve_fixed_point_identity(&th, 100, 1.5, 1.0, &cfg).unwrap();
        let e = risk_df_identity_closed_form(&th, 1.5, sol.tau_star, sol.zeta_star, 0.5);
        assert!((sol.tau_star.powi(2) - 1.0 - e.risk).abs() < 1e-9);
        assert!((sol.zeta_star - 1.0 + e.df).abs() < 1e-9);
        assert!(sol.tau_star >= 1.0);
        assert!(sol.zeta_star > 0.0 && sol.zeta_star <= 1.0);
    }

    #[test]
    fn trace_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let th = DVector::from_element(10, 1.0);
        let sol = solve_fixed_point_identity(&th, 10, 1.0, 1.0, &FixedPointConfig::default()).unwrap();
        write_trace_csv(&path, &sol.trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,tau,zeta,risk,df,se_risk,se_df\n"));
        assert_eq!(text.lines().count(), sol.trace.len() + 1);
    }
}
