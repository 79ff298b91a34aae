//! Coordinate-descent kernels for the random-design Lasso, the fixed-design
//! (non-separable) proximal problem, and their Huber-smoothed variants.

mod lasso;
mod penalty;
mod prox;

pub use lasso::{extract_subgradient, lasso_kkt_residual, lasso_objective, solve_lasso, solve_smoothed_lasso, write_fit_csv};
pub use penalty::{huber, huber_grad, moreau_l1, soft_threshold, Penalty};
pub use prox::{fixed_design_prox, prox_objective, smoothed_prox, ProxWorkspace};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop when the largest coordinate move in a full sweep is below
    /// `tol * max(1, ‖θ‖∞)`.
    pub tol: f64,
    /// Cap on coordinate sweeps.
    pub max_iter: usize,
    /// |θ_j| above this counts as active.
    pub active_threshold: f64,
    /// Accepted optimality violation, in subgradient units.
    pub kkt_tol: f64,
    /// Keep the objective after every sweep.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            active_threshold: 1e-8,
            kkt_tol: 1e-6,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tol > 0.0 && self.active_threshold > 0.0 && self.kkt_tol > 0.0 && self.max_iter > 0) {
            return Err(crate::Error::InvalidParameter("solver tolerances and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Result of the random-design Lasso (or its smoothed variant).
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub theta_hat: DVector<f64>,
    /// t̂ = Xᵀ(y − Xθ̂)/λ.
    pub subgrad: DVector<f64>,
    pub residual: DVector<f64>,
    pub active_count: usize,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// (1/2n)‖y − Xθ̂‖² + (λ/n)·pen(θ̂).
    pub objective: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Result of the fixed-design proximal problem.
#[derive(Debug, Clone)]
pub struct ProxFit {
    pub theta_hat: DVector<f64>,
    pub active_count: usize,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

pub(crate) fn count_active(theta: &DVector<f64>, threshold: f64) -> usize {
    theta.iter().filter(|t| t.abs() > threshold).count()
}
