use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{finish, CsvTable, ExperimentConfig, ExperimentRun, FlaggedReplica, ResultTable};
use crate::error::{Error, Result};
use crate::model::{sample_dataset, ProblemInstance};
use crate::seed::derive_replica_seed;
use crate::solvers::solve_lasso;
use crate::stats::median;
use crate::width::{estimate_width, ConeSpec};

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub n_over_p: f64,
    pub mu: f64,
    pub median_risk: f64,
    pub median_sparsity: f64,
    pub replicas_used: usize,
    pub flagged: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthThresholdSummary {
    pub width_mean: f64,
    pub width_median: f64,
    /// median², compared against n/p.
    pub width_median_sq: f64,
    /// p·median², compared against n.
    pub p_width_median_sq: f64,
    pub width_flagged: usize,
    pub width_unreliable: bool,
    pub cells: Vec<CellSummary>,
}

impl WidthThresholdSummary {
    pub fn cell(&self, n: usize, mu: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.n == n && c.mu == mu)
    }
}

struct Fit {
    risk: f64,
    sparsity: f64,
    converged: bool,
}

/// Lasso risk and sparsity over an (n, μ) grid beside the Monte Carlo width
/// of the signed support. Signal magnitudes share one sign pattern and, for a
/// given (n, replica), one draw of (X, z); fits along μ are warm-started.
pub fn run_width_threshold_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun<WidthThresholdSummary>> {
    cfg.validate()?;
    let grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::Config("width experiment needs a [grid] section".into()))?;
    let start = Instant::now();
    let model = cfg.covariance_model()?;
    let pattern = cfg.support_pattern();
    let p = cfg.instance.p;
    let cone = ConeSpec::new(pattern.clone(), &model).map_err(|e| Error::Config(e.to_string()))?;
    let width = estimate_width(&cone, cfg.width.n_samples, &cfg.master_seed(), &cfg.width.solver())?;

    let mut mus = grid.mu_values.clone();
    mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_sim = cfg.n_sim;
    let seed = cfg.master_seed();
    let inst = &cfg.instance;

    // One task per (n, replica); each walks μ in increasing order.
    let tasks: Vec<(usize, usize)> = (0..grid.n_values.len()).flat_map(|ni| (0..n_sim).map(move |r| (ni, r))).collect();
    let outcomes: Vec<Vec<std::result::Result<Fit, String>>> = tasks
        .par_iter()
        .map(|&(ni, r)| {
            let n = grid.n_values[ni];
            let rseed = derive_replica_seed(seed, r as u64);
            let mut warm = None;
            mus.iter()
                .map(|&mu| {
                    let mut run = || -> Result<Fit> {
                        let prob = ProblemInstance::new(&pattern * mu, inst.sigma, inst.lambda, n, inst.normalization)?;
                        let d = sample_dataset(&model, &prob, &rseed)?;
                        let fit = solve_lasso(&d.x, &d.y, inst.lambda, &cfg.solver, warm.as_ref())?;
                        let risk = (&fit.theta_hat - &prob.theta_star).norm_squared() / p as f64;
                        let out = Fit {
                            risk,
                            sparsity: fit.active_count as f64 / n as f64,
                            converged: fit.converged,
                        };
                        warm = Some(fit.theta_hat);
                        Ok(out)
                    };
                    run().map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let mut results = ResultTable::new("width");
    let mut flagged = Vec::new();
    let mut cells = Vec::new();
    for (ni, &n) in grid.n_values.iter().enumerate() {
        for (mi, &mu) in mus.iter().enumerate() {
            let label = format!("n={n};mu={mu}");
            let (mut risks, mut spars) = (Vec::new(), Vec::new());
            let (mut nflag, mut nonconv) = (0, 0);
            for r in 0..n_sim {
                match &outcomes[ni * n_sim + r][mi] {
                    Ok(f) => {
                        results.push(Some(r), None, &label, "risk", f.risk);
                        results.push(Some(r), None, &label, "sparsity", f.sparsity);
                        results.push(Some(r), None, &label, "converged", f.converged as u8 as f64);
                        risks.push(f.risk);
                        spars.push(f.sparsity);
                        nonconv += (!f.converged) as usize;
                    }
                    Err(reason) => {
                        nflag += 1;
                        flagged.push(FlaggedReplica {
                            replica: r,
                            reason: format!("{label}: {reason}"),
                        });
                    }
                }
            }
            if nonconv > 0 {
                log::warn!("{label}: {nonconv} of {n_sim} Lasso fits hit max_iter");
            }
            cells.push(CellSummary {
                n,
                n_over_p: n as f64 / p as f64,
                mu,
                median_risk: median(&risks),
                median_sparsity: median(&spars),
                replicas_used: risks.len(),
                flagged: nflag,
                nonconverged: nonconv,
            });
        }
    }

    let mut samples = CsvTable::new("width_samples.csv", &["sample_idx", "value", "p_times_value_sq", "feasible", "iterations"]);
    for (i, s) in width.samples.iter().enumerate() {
        samples.push(vec![
            i.to_string(),
            s.value.to_string(),
            (p as f64 * s.value * s.value).to_string(),
            ((s.feasible && s.converged) as u8).to_string(),
            s.iterations.to_string(),
        ]);
    }
    let mut cell_table = CsvTable::new(
        "cells.csv",
        &["n", "n_over_p", "mu", "median_risk", "median_sparsity", "replicas_used", "flagged", "nonconverged"],
    );
    for c in &cells {
        cell_table.push(vec![
            c.n.to_string(),
            c.n_over_p.to_string(),
            c.mu.to_string(),
            c.median_risk.to_string(),
            c.median_sparsity.to_string(),
            c.replicas_used.to_string(),
            c.flagged.to_string(),
            c.nonconverged.to_string(),
        ]);
    }
    let summary = WidthThresholdSummary {
        width_mean: width.mean,
        width_median: width.median,
        width_median_sq: width.median_sq,
        p_width_median_sq: width.p_median_sq,
        width_flagged: width.flagged,
        width_unreliable: width.unreliable,
        cells,
    };
    Ok(finish(results, vec![samples, cell_table], summary, flagged, cfg, start))
}
