//! Debiased estimates, interval construction, false-coverage accounting, and
//! exact leave-one-out tests.
//!
//! Formulas are written for rows x_i ~ N(0, Σ/n). Under the Σ/p normalization
//! the design is X'/c with c = √(p/n), and every interval is mapped back to the
//! original coordinates: corrections pick up c², half-widths pick up c.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{residualized_feature, CovarianceModel, Normalization};
use crate::solvers::{solve_lasso, LassoFit, SolverConfig};
use crate::stats::{cdf, two_sided_z};

fn dof_denominator(active: usize, n: usize) -> Result<f64> {
    if active >= n {
        return Err(Error::DegenerateDof { active, n });
    }
    Ok(1.0 - active as f64 / n as f64)
}

/// τ̂² = ‖y − Xθ̂‖² / (n (1 − ‖θ̂‖₀/n)²).
pub fn tau_hat(y: &DVector<f64>, x: &DMatrix<f64>, fit: &LassoFit) -> Result<f64> {
    let n = x.nrows();
    let denom = dof_denominator(fit.active_count, n)?;
    let r = y - x * &fit.theta_hat;
    Ok(r.norm() / ((n as f64).sqrt() * denom))
}

#[derive(Debug, Clone, Serialize)]
pub struct DebiasedEstimate {
    pub theta_d: DVector<f64>,
    pub adjusted: bool,
    /// 1/(1 − ‖θ̂‖₀/n) when adjusted, 1 otherwise.
    pub dof_factor: f64,
    /// c = 1 for Σ/n rows, √(p/n) for Σ/p rows.
    pub design_scale: f64,
    pub n: usize,
}

/// θ̂ᵈ = θ̂ + c²Σ⁻¹Xᵀ(y − Xθ̂)/(1 − ‖θ̂‖₀/n), or without the denominator when
/// `adjusted` is false.
pub fn debias(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &LassoFit,
    model: &CovarianceModel,
    norm: Normalization,
    adjusted: bool,
) -> Result<DebiasedEstimate> {
    let (n, p) = x.shape();
    if p != model.p() || y.len() != n || fit.theta_hat.len() != p {
        return Err(Error::DimensionMismatch("design, response, fit and covariance disagree".into()));
    }
    let dof_factor = if adjusted { 1.0 / dof_denominator(fit.active_count, n)? } else { 1.0 };
    let c = norm.design_scale(n, p);
    let r = y - x * &fit.theta_hat;
    let corr = model.inv() * x.tr_mul(&r);
    let theta_d = &fit.theta_hat + corr * (c * c * dof_factor);
    Ok(DebiasedEstimate {
        theta_d,
        adjusted,
        dof_factor,
        design_scale: c,
        n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceReport {
    pub level: f64,
    /// Noise scale used in the half-widths.
    pub tau: f64,
    pub center: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Two-sided p-values for θ_j = 0.
    pub p_value: Vec<f64>,
    pub covered: Option<Vec<bool>>,
    pub fcp: Option<f64>,
}

impl ConfidenceReport {
    fn build(center: &DVector<f64>, se: impl Fn(usize) -> f64, tau: f64, q: f64, theta_star: Option<&DVector<f64>>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("level q must lie in (0,1), got {q}")));
        }
        if let Some(t) = theta_star {
            if t.len() != center.len() {
                return Err(Error::DimensionMismatch("theta* length differs from estimate".into()));
            }
        }
        let z = two_sided_z(q);
        let p = center.len();
        let mut lo = Vec::with_capacity(p);
        let mut hi = Vec::with_capacity(p);
        let mut pv = Vec::with_capacity(p);
        for j in 0..p {
            let s = se(j);
            lo.push(center[j] - z * s);
            hi.push(center[j] + z * s);
            pv.push(if s > 0.0 { 2.0 * cdf(-center[j].abs() / s) } else { f64::NAN });
        }
        let covered = theta_star.map(|t| (0..p).map(|j| lo[j] <= t[j] && t[j] <= hi[j]).collect::<Vec<_>>());
        let fcp = covered
            .as_ref()
            .map(|c| c.iter().filter(|&&b| !b).count() as f64 / p.max(1) as f64);
        Ok(Self {
            level: q,
            tau,
            center: center.iter().copied().collect(),
            lo,
            hi,
            p_value: pv,
            covered,
            fcp,
        })
    }

    pub fn half_width(&self, j: usize) -> f64 {
        0.5 * (self.hi[j] - self.lo[j])
    }

    /// Rows `coordinate,estimate,lo,hi,covered,p_value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["coordinate", "estimate", "lo", "hi", "covered", "p_value"])?;
        for j in 0..self.center.len() {
            let cov = self
                .covered
                .as_ref()
                .map(|c| (c[j] as u8).to_string())
                .unwrap_or_default();
            w.write_record([
                j.to_string(),
                self.center[j].to_string(),
                self.lo[j].to_string(),
                self.hi[j].to_string(),
                cov,
                self.p_value[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// CI_j = θ̂ᵈ_j ± c·Σ_{j|−j}^{−1/2}·τ·z_{1−q/2}.
pub fn debiased_cis(
    est: &DebiasedEstimate,
    tau: f64,
    model: &CovarianceModel,
    q: f64,
    theta_star: Option<&DVector<f64>>,
) -> Result<ConfidenceReport> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    let c = est.design_scale;
    ConfidenceReport::build(&est.theta_d, |j| c * tau / model.cond_var(j).sqrt(), tau, q, theta_star)
}

/// Interval around the unadjusted estimate with the plain residual scale ‖y − Xθ̂‖/√n.
pub fn no_dof_ci(
    est: &DebiasedEstimate,
    residual_norm: f64,
    model: &CovarianceModel,
    q: f64,
    theta_star: Option<&DVector<f64>>,
) -> Result<ConfidenceReport> {
    let c = est.design_scale;
    let s = residual_norm / (est.n as f64).sqrt();
    ConfidenceReport::build(&est.theta_d, |j| c * s / model.cond_var(j).sqrt(), s, q, theta_star)
}

#[derive(Debug, Clone, Serialize)]
pub struct LooResult {
    pub j: usize,
    /// Estimate of θ*_j: ω + ξ_j^ω (equal to ξ_j when ω = 0).
    pub xi: f64,
    pub tau_hat_loo: f64,
    pub ci: (f64, f64),
    /// Exact two-sided p-value for θ*_j = ω.
    pub p_value: f64,
    pub omega: f64,
    pub level: f64,
    pub active_count_loo: usize,
    pub converged: bool,
}

impl LooResult {
    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

fn drop_column(x: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    x.clone().remove_column(j)
}

/// Precomputed pieces shared by every test on coordinate j.
pub struct LooContext {
    x_minus: DMatrix<f64>,
    x_perp: DVector<f64>,
    cond_var: f64,
    scale: f64,
    j: usize,
}

impl LooContext {
    pub fn new(x: &DMatrix<f64>, model: &CovarianceModel, norm: Normalization, j: usize) -> Result<Self> {
        let (n, p) = x.shape();
        let x_perp = residualized_feature(x, model, j)?;
        Ok(Self {
            x_minus: drop_column(x, j),
            x_perp,
            cond_var: model.cond_var(j),
            scale: norm.design_scale(n, p),
            j,
        })
    }

    pub fn x_perp(&self) -> &DVector<f64> {
        &self.x_perp
    }

    /// Test of θ*_j = ω using the pseudo-outcome y − ω·x̆⊥_j.
    pub fn test(
        &self,
        y: &DVector<f64>,
        omega: f64,
        lambda: f64,
        q: f64,
        cfg: &SolverConfig,
        warm: Option<&DVector<f64>>,
    ) -> Result<(LooResult, DVector<f64>)> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0,1), got {q}")));
        }
        let n = self.x_minus.nrows();
        let y_omega = if omega == 0.0 { y.clone() } else { y - &self.x_perp * omega };
        let fit = solve_lasso(&self.x_minus, &y_omega, lambda, cfg, warm)?;
        let denom = dof_denominator(fit.active_count, n)?;
        let r = &y_omega - &self.x_minus * &fit.theta_hat;
        let c2 = self.scale * self.scale;
        let xi = c2 * self.x_perp.dot(&r) / (self.cond_var * denom);
        let tau = r.norm() / ((n as f64).sqrt() * denom);
        let sd = self.scale * tau / self.cond_var.sqrt();
        let z = two_sided_z(q);
        let est = omega + xi;
        let p_value = if sd > 0.0 { 2.0 * cdf(-xi.abs() / sd) } else { f64::NAN };
        Ok((
            LooResult {
                j: self.j,
                xi: est,
                tau_hat_loo: tau,
                ci: (est - z * sd, est + z * sd),
                p_value,
                omega,
                level: q,
                active_count_loo: fit.active_count,
                converged: fit.converged,
            },
            fit.theta_hat,
        ))
    }
}

/// ξ_j, τ̂_loo and CI^loo at level q (the ω = 0 test).
#[allow(clippy::too_many_arguments)]
pub fn loo_statistic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &CovarianceModel,
    norm: Normalization,
    j: usize,
    lambda: f64,
    q: f64,
    cfg: &SolverConfig,
) -> Result<LooResult> {
    exact_test(x, y, model, norm, j, 0.0, lambda, q, cfg)
}

/// Exact test of θ*_j = ω; the p-value is 2Φ(−|ξ_j^ω| Σ_{j|−j}^{1/2} / (c τ̂^{ω,j})).
#[allow(clippy::too_many_arguments)]
pub fn exact_test(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &CovarianceModel,
    norm: Normalization,
    j: usize,
    omega: f64,
    lambda: f64,
    q: f64,
    cfg: &SolverConfig,
) -> Result<LooResult> {
    let ctx = LooContext::new(x, model, norm, j)?;
    Ok(ctx.test(y, omega, lambda, q, cfg, None)?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactInterval {
    /// Grid points whose test was not rejected.
    pub accepted: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Convex hull of the accepted points, `None` when nothing was accepted.
    pub interval: Option<(f64, f64)>,
}

/// Inverts the exact tests over a sorted grid of null values.
#[allow(clippy::too_many_arguments)]
pub fn invert_exact_test(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &CovarianceModel,
    norm: Normalization,
    j: usize,
    lambda: f64,
    level: f64,
    omega_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<ExactInterval> {
    if omega_grid.iter().any(|w| !w.is_finite()) || omega_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("omega grid must be finite and sorted".into()));
    }
    let ctx = LooContext::new(x, model, norm, j)?;
    let mut warm: Option<DVector<f64>> = None;
    let mut accepted = Vec::new();
    let mut p_values = Vec::with_capacity(omega_grid.len());
    for &w in omega_grid {
        let (res, theta) = ctx.test(y, w, lambda, level, cfg, warm.as_ref())?;
        p_values.push(res.p_value);
        if res.p_value >= level {
            accepted.push(w);
        }
        warm = Some(theta);
    }
    let interval = match (accepted.first(), accepted.last()) {
        (Some(&a), Some(&b)) => Some((a, b)),
        _ => None,
    };
    Ok(ExactInterval {
        accepted,
        p_values,
        interval,
    })
}

/// Writes LOO results as `coordinate,estimate,lo,hi,covered,p_value`.
pub fn write_loo_csv(path: &Path, rows: &[LooResult], truth: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["coordinate", "estimate", "lo", "hi", "covered", "p_value"])?;
    for (i, r) in rows.iter().enumerate() {
        let cov = truth.map(|t| (r.covers(t[i]) as u8).to_string()).unwrap_or_default();
        w.write_record([
            r.j.to_string(),
            r.xi.to_string(),
            r.ci.0.to_string(),
            r.ci.1.to_string(),
            cov,
            r.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
