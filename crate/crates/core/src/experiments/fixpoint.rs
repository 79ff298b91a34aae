use std::time::Instant;

use serde::Serialize;

use super::{finish, partition, run_replicas, CsvTable, ExperimentConfig, ExperimentRun, FixedPointMethod, ResultTable};
use crate::error::{Error, Result};
use crate::fixed_point::{solve_fixed_point, solve_fixed_point_identity, FixedPointSolution};
use crate::inference::{debias, tau_hat};
use crate::model::sample_dataset;
use crate::seed::Stream;
use crate::solvers::solve_lasso;
use crate::stats::{ks_statistic_normal, median};

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointSummary {
    pub method: String,
    /// In Σ/n units (the equivalent canonical instance).
    pub tau_star: f64,
    pub zeta_star: f64,
    pub se_tau: f64,
    pub se_zeta: f64,
    pub iterations: usize,
    pub zeta_floor_hit: bool,
    pub replicas_used: usize,
    /// Medians over replicas.
    pub median_rel_residual: f64,
    pub median_sparsity_gap: f64,
    pub median_rel_tau_hat: f64,
    pub median_ks: f64,
    pub solution: FixedPointSolution,
}

struct Rep {
    resid: f64,
    sparsity: f64,
    tau_hat: f64,
    ks: f64,
}

/// Solves for (τ*, ζ*) and compares against per-replica Lasso fits: residual
/// norm against τ*ζ*, sparsity against 1 − ζ*, τ̂ against τ*, and the debiased
/// coordinates against N(0, c²τ*²(Σ⁻¹)_jj).
pub fn run_fixed_point_validation(cfg: &ExperimentConfig) -> Result<ExperimentRun<FixedPointSummary>> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.covariance_model()?;
    let inst = cfg.problem(cfg.instance.mu, cfg.instance.n)?;
    let canon = inst.canonical();
    let (n, p) = (inst.n, inst.p());
    let c = inst.normalization.design_scale(n, p);

    let identity = model.is_diagonal() && model.sigma().diagonal().iter().all(|&d| d == 1.0);
    let closed = match cfg.fixed_point_method {
        FixedPointMethod::Auto => identity && cfg.alpha == 0.0,
        FixedPointMethod::ClosedForm => {
            if !identity || cfg.alpha != 0.0 {
                return Err(Error::Config("closed-form fixed point needs identity covariance and alpha = 0".into()));
            }
            true
        }
        FixedPointMethod::MonteCarlo => false,
    };
    let sol = if closed {
        solve_fixed_point_identity(&canon.theta_star, n, canon.lambda, canon.sigma_noise, &cfg.fixed_point)?
    } else {
        let mc_seed = cfg.master_seed().derive_replica(u64::MAX).stream_seed(Stream::MonteCarlo, 0);
        solve_fixed_point(
            &canon.theta_star,
            &model,
            n,
            canon.lambda,
            canon.sigma_noise,
            &cfg.fixed_point,
            crate::seed::SeedSpec::new(mc_seed),
            cfg.alpha,
            &cfg.solver,
        )?
    };
    let (tau, zeta) = (sol.tau_star, sol.zeta_star);
    let inv_diag: Vec<f64> = (0..p).map(|j| model.inv()[(j, j)].sqrt()).collect();

    let outcomes = run_replicas(cfg.n_sim, cfg.master_seed(), |_, seed| {
        let d = sample_dataset(&model, &inst, &seed)?;
        let fit = solve_lasso(&d.x, &d.y, inst.lambda, &cfg.solver, None)?;
        if !fit.converged {
            return Ok(None);
        }
        let th = tau_hat(&d.y, &d.x, &fit)?;
        let est = debias(&d.x, &d.y, &fit, &model, inst.normalization, true)?;
        let z: Vec<f64> = (0..p)
            .map(|j| (est.theta_d[j] - inst.theta_star[j]) / (c * tau * inv_diag[j]))
            .collect();
        Ok(Some(Rep {
            resid: fit.residual_norm() / (n as f64).sqrt(),
            sparsity: fit.active_count as f64 / n as f64,
            tau_hat: th,
            ks: ks_statistic_normal(&z),
        }))
    });
    let (kept, flagged) = partition(outcomes);

    let mut results = ResultTable::new("fixpoint");
    let (mut a, mut b, mut e, mut k) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, rep) in &kept {
        let rel_resid = (rep.resid - tau * zeta).abs() / (tau * zeta);
        let gap = (rep.sparsity - (1.0 - zeta)).abs();
        let rel_tau = (rep.tau_hat - tau).abs() / tau;
        for (m, v) in [
            ("residual_norm", rep.resid),
            ("rel_residual", rel_resid),
            ("sparsity", rep.sparsity),
            ("sparsity_gap", gap),
            ("tau_hat", rep.tau_hat),
            ("rel_tau_hat", rel_tau),
            ("ks_debiased", rep.ks),
        ] {
            results.push(Some(*r), None, "", m, v);
        }
        a.push(rel_resid);
        b.push(gap);
        e.push(rel_tau);
        k.push(rep.ks);
    }
    let mut trace = CsvTable::new("trace.csv", &["iter", "tau", "zeta", "risk", "df", "se_risk", "se_df", "n_mc"]);
    for t in &sol.trace {
        trace.push(vec![
            t.iter.to_string(),
            t.tau.to_string(),
            t.zeta.to_string(),
            t.risk.to_string(),
            t.df.to_string(),
            t.se_risk.to_string(),
            t.se_df.to_string(),
            t.n_mc.to_string(),
        ]);
    }
    let summary = FixedPointSummary {
        method: if closed { "closed_form" } else { "monte_carlo" }.into(),
        tau_star: tau,
        zeta_star: zeta,
        se_tau: sol.se_tau,
        se_zeta: sol.se_zeta,
        iterations: sol.iterations,
        zeta_floor_hit: sol.zeta_floor_hit,
        replicas_used: kept.len(),
        median_rel_residual: median(&a),
        median_sparsity_gap: median(&b),
        median_rel_tau_hat: median(&e),
        median_ks: median(&k),
        solution: sol,
    };
    Ok(finish(results, vec![trace], summary, flagged, cfg, start))
}
