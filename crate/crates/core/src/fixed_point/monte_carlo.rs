//! Sample-average estimates of the fixed-design risk and degrees of freedom
//! with common random numbers.
//!
//! Draw i is generated from its own stream `(MonteCarlo, i)`, so any engine
//! built from the same seed sees the same Gaussian vectors, in the same order,
//! regardless of thread count or how many draws were requested.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{RiskDfEstimate, RiskDfMap};
use crate::error::{Error, Result};
use crate::model::CovarianceModel;
use crate::seed::{SeedSpec, Stream};
use crate::solvers::{Penalty, ProxWorkspace, SolverConfig};

struct Draw {
    /// Σ^{1/2} g.
    sqrt_g: DVector<f64>,
    ws: ProxWorkspace,
}

/// Reusable estimator of (R, df) at arbitrary (τ, ζ) over a fixed set of draws.
pub struct RiskDfEngine<'a> {
    model: &'a CovarianceModel,
    theta_star: DVector<f64>,
    sigma_theta_star: DVector<f64>,
    n: usize,
    lambda: f64,
    alpha: f64,
    cfg: SolverConfig,
    seed: SeedSpec,
    draws: Vec<Draw>,
    max_draws: usize,
    growth: usize,
}

/// Per-draw contributions at one (τ, ζ).
#[derive(Debug, Clone, Copy)]
pub struct DrawValue {
    pub risk: f64,
    pub df: f64,
    pub converged: bool,
}

impl<'a> RiskDfEngine<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        theta_star: &DVector<f64>,
        model: &'a CovarianceModel,
        n: usize,
        lambda: f64,
        alpha: f64,
        n_mc: usize,
        seed: SeedSpec,
        cfg: SolverConfig,
    ) -> Result<Self> {
        if theta_star.len() != model.p() {
            return Err(Error::DimensionMismatch(format!(
                "theta* has length {}, covariance is {}-dimensional",
                theta_star.len(),
                model.p()
            )));
        }
        if n == 0 || n_mc == 0 {
            return Err(Error::InvalidParameter("n and n_mc must be >= 1".into()));
        }
        if !(lambda > 0.0) || !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("need lambda > 0 and alpha >= 0, got ({lambda}, {alpha})")));
        }
        cfg.validate()?;
        let mut engine = Self {
            model,
            sigma_theta_star: model.sigma() * theta_star,
            theta_star: theta_star.clone(),
            n,
            lambda,
            alpha,
            cfg,
            seed,
            draws: Vec::new(),
            max_draws: n_mc,
            growth: 1,
        };
        engine.extend_to(n_mc);
        Ok(engine)
    }

    /// Allows [`RiskDfMap::grow`] to multiply the draw count by `factor` up to `max`.
    pub fn with_growth(mut self, factor: usize, max: usize) -> Self {
        self.growth = factor.max(1);
        self.max_draws = max.max(self.draws.len());
        self
    }

    pub fn n_mc(&self) -> usize {
        self.draws.len()
    }

    fn extend_to(&mut self, count: usize) {
        let start = self.draws.len();
        if count <= start {
            return;
        }
        let p = self.model.p();
        let model = self.model;
        let seed = self.seed;
        let warm = self.draws.first().map(|d| d.ws.clone());
        let new: Vec<Draw> = (start..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.rng(Stream::MonteCarlo, i as u64);
                let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let sqrt_g = if model.is_diagonal() {
                    g.component_mul(&model.sqrt().diagonal())
                } else {
                    model.sqrt() * g
                };
                Draw {
                    sqrt_g,
                    ws: warm.clone().unwrap_or_else(|| ProxWorkspace::zeros(p)),
                }
            })
            .collect();
        self.draws.extend(new);
    }

    /// Solves the prox for every draw at (τ, ζ) and returns per-draw values in draw order.
    pub fn draw_values(&mut self, tau: f64, zeta: f64) -> Vec<DrawValue> {
        let model = self.model;
        let sst = &self.sigma_theta_star;
        let th = &self.theta_star;
        let (n, lambda, alpha, cfg) = (self.n as f64, self.lambda, self.alpha, self.cfg);
        let pen = Penalty::from_alpha(alpha);
        self.draws
            .par_iter_mut()
            .map(|d| {
                let b = sst + &d.sqrt_g * tau;
                let status = d.ws.solve(model, &b, zeta, lambda, pen, &cfg);
                let diff = &d.ws.theta - th;
                let risk = diff.dot(&(&d.ws.sigma_theta - sst)) / n;
                let df = if alpha > 0.0 {
                    diff.dot(&d.sqrt_g) / (n * tau)
                } else {
                    d.ws.theta.iter().filter(|t| t.abs() > cfg.active_threshold).count() as f64 / n
                };
                DrawValue {
                    risk: risk.max(0.0),
                    df,
                    converged: status.converged,
                }
            })
            .collect()
    }

    pub fn estimate(&mut self, tau: f64, zeta: f64) -> RiskDfEstimate {
        summarize(&self.draw_values(tau, zeta))
    }
}

/// Means, standard errors and the risk/df covariance of the mean.
pub fn summarize(values: &[DrawValue]) -> RiskDfEstimate {
    let m = values.len() as f64;
    let risk = values.iter().map(|v| v.risk).sum::<f64>() / m;
    let df = values.iter().map(|v| v.df).sum::<f64>() / m;
    let (mut vr, mut vd, mut cv) = (0.0, 0.0, 0.0);
    for v in values {
        vr += (v.risk - risk).powi(2);
        vd += (v.df - df).powi(2);
        cv += (v.risk - risk) * (v.df - df);
    }
    let denom = if values.len() > 1 { (m - 1.0) * m } else { f64::INFINITY };
    RiskDfEstimate {
        risk,
        df,
        se_risk: (vr / denom).sqrt(),
        se_df: (vd / denom).sqrt(),
        cov_risk_df: cv / denom,
        n_mc: values.len(),
        flagged: values.iter().filter(|v| !v.converged).count(),
    }
}

impl RiskDfMap for RiskDfEngine<'_> {
    fn evaluate(&mut self, tau: f64, zeta: f64) -> RiskDfEstimate {
        self.estimate(tau, zeta)
    }

    fn grow(&mut self) -> bool {
        let cur = self.draws.len();
        let target = (cur * self.growth).min(self.max_draws);
        if target > cur {
            self.extend_to(target);
            true
        } else {
            false
        }
    }
}

/// One-shot Monte Carlo estimate of R(τ², ζ) and df(τ², ζ).
#[allow(clippy::too_many_arguments)]
pub fn estimate_risk_df(
    theta_star: &DVector<f64>,
    model: &CovarianceModel,
    n: usize,
    lambda: f64,
    tau: f64,
    zeta: f64,
    n_mc: usize,
    seed: SeedSpec,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<RiskDfEstimate> {
    if !(tau > 0.0) || !(zeta > 0.0) {
        return Err(Error::InvalidParameter(format!("need tau > 0 and zeta > 0, got ({tau}, {zeta})")));
    }
    let mut engine = RiskDfEngine::new(theta_star, model, n, lambda, alpha, n_mc, seed, *cfg)?;
    Ok(engine.estimate(tau, zeta))
}
