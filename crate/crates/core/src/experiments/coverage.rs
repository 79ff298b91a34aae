use std::time::Instant;

use serde::Serialize;

use super::{finish, partition, run_replicas, CsvTable, ExperimentConfig, ExperimentRun, ResultTable};
use crate::error::{Error, Result};
use crate::inference::{debias, tau_hat, LooContext};
use crate::model::sample_dataset;
use crate::solvers::solve_lasso;
use crate::stats::{ks_statistic_normal, mean, two_sided_z};

#[derive(Debug, Clone, Serialize)]
pub struct CoverageLevel {
    pub q: f64,
    pub coverage_d: f64,
    pub coverage_nodof: f64,
    pub coverage_loo: f64,
    pub mean_width_d: f64,
    pub mean_width_nodof: f64,
    pub mean_width_loo: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageSummary {
    pub target: usize,
    pub theta_target: f64,
    pub replicas_used: usize,
    pub levels: Vec<CoverageLevel>,
    /// KS distance of ξ_j Σ_{j|−j}^{1/2}/(c τ̂_loo), centered at θ*_j, from N(0,1).
    pub loo_ks: f64,
    pub mean_active_fraction: f64,
}

impl CoverageSummary {
    pub fn at(&self, q: f64) -> Option<&CoverageLevel> {
        self.levels.iter().find(|l| (l.q - q).abs() < 1e-12)
    }
}

struct Rep {
    /// (center, standard error) for each method.
    d: (f64, f64),
    nodof: (f64, f64),
    loo: (f64, f64),
    active: usize,
}

/// Per replica: CI^d, CI^{d,noDOF} and CI^loo for the target coordinate.
pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun<CoverageSummary>> {
    cfg.validate()?;
    let target = cfg
        .instance
        .target
        .ok_or_else(|| Error::Config("coverage needs instance.target".into()))?;
    let start = Instant::now();
    let model = cfg.covariance_model()?;
    let inst = cfg.problem(cfg.instance.mu, cfg.instance.n)?;
    let (n, p) = (inst.n, inst.p());
    let c = inst.normalization.design_scale(n, p);
    let truth = inst.theta_star[target];
    let sd_unit = c / model.cond_var(target).sqrt();

    let outcomes = run_replicas(cfg.n_sim, cfg.master_seed(), |_, seed| {
        let d = sample_dataset(&model, &inst, &seed)?;
        let fit = solve_lasso(&d.x, &d.y, inst.lambda, &cfg.solver, None)?;
        if !fit.converged {
            return Ok(None);
        }
        let tau = tau_hat(&d.y, &d.x, &fit)?;
        let adj = debias(&d.x, &d.y, &fit, &model, inst.normalization, true)?;
        let un = debias(&d.x, &d.y, &fit, &model, inst.normalization, false)?;
        let rnorm = fit.residual_norm() / (n as f64).sqrt();
        let ctx = LooContext::new(&d.x, &model, inst.normalization, target)?;
        let (loo, _) = ctx.test(&d.y, 0.0, inst.lambda, cfg.q[0], &cfg.solver, None)?;
        if !loo.converged {
            return Ok(None);
        }
        Ok(Some(Rep {
            d: (adj.theta_d[target], sd_unit * tau),
            nodof: (un.theta_d[target], sd_unit * rnorm),
            loo: (loo.xi, sd_unit * loo.tau_hat_loo),
            active: fit.active_count,
        }))
    });
    let (kept, flagged) = partition(outcomes);

    let mut results = ResultTable::new("coverage");
    let mut intervals = CsvTable::new("intervals.csv", &["replica", "q", "method", "estimate", "lo", "hi", "covered"]);
    let methods = ["d", "nodof", "loo"];
    let mut levels = Vec::new();
    for &q in &cfg.q {
        let z = two_sided_z(q);
        let ql = format!("q={q}");
        let mut cov = [Vec::new(), Vec::new(), Vec::new()];
        let mut wid = [Vec::new(), Vec::new(), Vec::new()];
        for (r, rep) in &kept {
            for (m, (est, se)) in [rep.d, rep.nodof, rep.loo].into_iter().enumerate() {
                let (lo, hi) = (est - z * se, est + z * se);
                let covered = lo <= truth && truth <= hi;
                results.push(Some(*r), Some(target), &ql, &format!("covered_{}", methods[m]), covered as u8 as f64);
                results.push(Some(*r), Some(target), &ql, &format!("width_{}", methods[m]), hi - lo);
                intervals.push(vec![
                    r.to_string(),
                    q.to_string(),
                    methods[m].to_string(),
                    est.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    (covered as u8).to_string(),
                ]);
                cov[m].push(covered as u8 as f64);
                wid[m].push(hi - lo);
            }
        }
        levels.push(CoverageLevel {
            q,
            coverage_d: mean(&cov[0]),
            coverage_nodof: mean(&cov[1]),
            coverage_loo: mean(&cov[2]),
            mean_width_d: mean(&wid[0]),
            mean_width_nodof: mean(&wid[1]),
            mean_width_loo: mean(&wid[2]),
        });
    }
    let loo_z: Vec<f64> = kept.iter().map(|(_, r)| (r.loo.0 - truth) / r.loo.1).collect();
    for ((r, _), z) in kept.iter().zip(&loo_z) {
        results.push(Some(*r), Some(target), "", "loo_z", *z);
    }
    let summary = CoverageSummary {
        target,
        theta_target: truth,
        replicas_used: kept.len(),
        levels,
        loo_ks: if loo_z.is_empty() { f64::NAN } else { ks_statistic_normal(&loo_z) },
        mean_active_fraction: mean(&kept.iter().map(|(_, r)| r.active as f64 / n as f64).collect::<Vec<_>>()),
    };
    Ok(finish(results, vec![intervals], summary, flagged, cfg, start))
}
