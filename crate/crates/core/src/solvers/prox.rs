use nalgebra::DVector;

use super::penalty::Penalty;
use super::{count_active, ProxFit, SolverConfig};
use crate::error::{Error, Result};
use crate::model::CovarianceModel;

/// (ζ/2)‖y^f − Σ^{1/2}θ‖² + λ M_α(θ)  (α = 0 gives the ℓ1 penalty).
pub fn prox_objective(
    y_f: &DVector<f64>,
    model: &CovarianceModel,
    theta: &DVector<f64>,
    lambda: f64,
    zeta: f64,
    alpha: f64,
) -> f64 {
    let pen = Penalty::from_alpha(alpha);
    let r = y_f - model.sqrt() * theta;
    0.5 * zeta * r.norm_squared() + lambda * theta.iter().map(|&t| pen.value(t)).sum::<f64>()
}

/// Iterate plus the cached product Σθ, reusable as a warm start.
#[derive(Debug, Clone)]
pub struct ProxWorkspace {
    pub theta: DVector<f64>,
    /// Always equal to Σθ (up to rounding).
    pub sigma_theta: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProxStatus {
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl ProxWorkspace {
    pub fn zeros(p: usize) -> Self {
        Self {
            theta: DVector::zeros(p),
            sigma_theta: DVector::zeros(p),
        }
    }

    pub fn from_theta(model: &CovarianceModel, theta: DVector<f64>) -> Self {
        let sigma_theta = model.sigma() * &theta;
        Self { theta, sigma_theta }
    }

    /// Minimizes (ζ/2)θᵀΣθ − ζθᵀb + λ·pen(θ) starting from the current iterate.
    ///
    /// With b = Σ^{1/2}y^f this is the fixed-design problem up to a constant.
    pub fn solve(
        &mut self,
        model: &CovarianceModel,
        b: &DVector<f64>,
        zeta: f64,
        lambda: f64,
        pen: Penalty,
        cfg: &SolverConfig,
    ) -> ProxStatus {
        let sigma = model.sigma();
        let p = model.p();
        let theta = &mut self.theta;
        let q = &mut self.sigma_theta;

        let violation = |theta: &DVector<f64>, q: &DVector<f64>| -> f64 {
            let scale = if lambda > 0.0 { lambda } else { 1.0 };
            (0..p)
                .map(|j| {
                    let g = zeta * (b[j] - q[j]);
                    match pen {
                        Penalty::L1 => pen.violation(theta[j], g / scale),
                        Penalty::Huber(a) => (g - lambda * super::huber_grad(theta[j], a)).abs() / scale,
                    }
                })
                .fold(0.0, f64::max)
        };

        if model.is_diagonal() {
            for j in 0..p {
                let d = sigma[(j, j)];
                theta[j] = pen.coord_min(zeta * d, b[j] / d, lambda);
                q[j] = d * theta[j];
            }
            return ProxStatus {
                iterations: 1,
                converged: true,
                kkt_residual: violation(theta, q),
            };
        }

        let sweep = |theta: &mut DVector<f64>, q: &mut DVector<f64>, only_active: bool| -> f64 {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                if only_active && theta[j] == 0.0 {
                    continue;
                }
                let d = sigma[(j, j)];
                let old = theta[j];
                let u = (b[j] - q[j]) / d + old;
                let new = pen.coord_min(zeta * d, u, lambda);
                let delta = new - old;
                if delta != 0.0 {
                    theta[j] = new;
                    q.axpy(delta, &sigma.column(j), 1.0);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            max_delta
        };

        let mut iterations = 0;
        let mut converged = false;
        let mut kkt_residual = f64::INFINITY;
        while iterations < cfg.max_iter {
            let delta = sweep(theta, q, false);
            iterations += 1;
            if delta <= cfg.tol * theta.amax().max(1.0) {
                q.copy_from(&(sigma * &*theta));
                kkt_residual = violation(theta, q);
                if kkt_residual <= cfg.kkt_tol {
                    converged = true;
                    break;
                }
            }
            while iterations < cfg.max_iter {
                let d = sweep(theta, q, true);
                iterations += 1;
                if d <= cfg.tol * theta.amax().max(1.0) {
                    break;
                }
            }
        }
        if !converged {
            q.copy_from(&(sigma * &*theta));
            kkt_residual = violation(theta, q);
        }
        ProxStatus {
            iterations,
            converged,
            kkt_residual,
        }
    }
}

fn check(y_f: &DVector<f64>, model: &CovarianceModel, lambda: f64, zeta: f64) -> Result<()> {
    if y_f.len() != model.p() {
        return Err(Error::DimensionMismatch(format!("y_f has length {}, covariance is {}-dimensional", y_f.len(), model.p())));
    }
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::InvalidParameter(format!("zeta must be > 0, got {zeta}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

fn run(
    y_f: &DVector<f64>,
    model: &CovarianceModel,
    lambda: f64,
    zeta: f64,
    alpha: f64,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> ProxFit {
    let b = model.sqrt() * y_f;
    let mut ws = match warm {
        Some(w) => ProxWorkspace::from_theta(model, w.clone()),
        None => ProxWorkspace::zeros(model.p()),
    };
    let status = ws.solve(model, &b, zeta, lambda, Penalty::from_alpha(alpha), cfg);
    ProxFit {
        active_count: count_active(&ws.theta, cfg.active_threshold),
        objective: prox_objective(y_f, model, &ws.theta, lambda, zeta, alpha),
        theta_hat: ws.theta,
        iterations: status.iterations,
        kkt_residual: status.kkt_residual,
        converged: status.converged,
    }
}

/// η(y^f, ζ) = argmin (ζ/2)‖y^f − Σ^{1/2}θ‖² + λ‖θ‖₁.
pub fn fixed_design_prox(
    y_f: &DVector<f64>,
    model: &CovarianceModel,
    lambda: f64,
    zeta: f64,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<ProxFit> {
    cfg.validate()?;
    check(y_f, model, lambda, zeta)?;
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be > 0".into()));
    }
    Ok(run(y_f, model, lambda, zeta, 0.0, cfg, warm))
}

/// η_α(y^f, ζ) with the Huber-smoothed penalty; α = 0 delegates to [`fixed_design_prox`].
pub fn smoothed_prox(
    y_f: &DVector<f64>,
    model: &CovarianceModel,
    lambda: f64,
    zeta: f64,
    alpha: f64,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<ProxFit> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return fixed_design_prox(y_f, model, lambda, zeta, cfg, warm);
    }
    cfg.validate()?;
    check(y_f, model, lambda, zeta)?;
    Ok(run(y_f, model, lambda, zeta, alpha, cfg, warm))
}
