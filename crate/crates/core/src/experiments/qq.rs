use std::time::Instant;

use serde::Serialize;

use super::{finish, histogram_rows, partition, qq_rows, run_replicas, CsvTable, ExperimentConfig, ExperimentRun, ResultTable};
use crate::error::{Error, Result};
use crate::inference::{debias, tau_hat};
use crate::model::sample_dataset;
use crate::solvers::solve_lasso;
use crate::stats::{ks_statistic_normal, mean, std_dev};

#[derive(Debug, Clone, Serialize)]
pub struct QqGroupStats {
    pub method: String,
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QqSummary {
    pub groups: Vec<QqGroupStats>,
    pub replicas_used: usize,
    pub mean_active_fraction: f64,
}

impl QqSummary {
    pub fn get(&self, method: &str, group: &str) -> Option<&QqGroupStats> {
        self.groups.iter().find(|g| g.method == method && g.group == group)
    }
}

pub const METHODS: [&str; 2] = ["adjusted", "unadjusted"];
pub const GROUPS: [&str; 3] = ["neg", "zero", "pos"];

pub(crate) fn group_of(v: f64) -> usize {
    if v < 0.0 {
        0
    } else if v == 0.0 {
        1
    } else {
        2
    }
}

struct QqReplica {
    adjusted: Vec<f64>,
    unadjusted: Vec<f64>,
    active: usize,
}

/// Standardized debiased coordinates with and without the degrees-of-freedom
/// adjustment, grouped by the sign of θ*_j.
pub fn run_qq_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun<QqSummary>> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.covariance_model()?;
    let inst = cfg.problem(cfg.instance.mu, cfg.instance.n)?;
    let (n, p) = (inst.n, inst.p());
    let c = inst.normalization.design_scale(n, p);
    let theta = &inst.theta_star;

    let outcomes = run_replicas(cfg.n_sim, cfg.master_seed(), |_, seed| {
        let d = sample_dataset(&model, &inst, &seed)?;
        let fit = solve_lasso(&d.x, &d.y, inst.lambda, &cfg.solver, None)?;
        if !fit.converged {
            return Ok(None);
        }
        let rnorm = fit.residual_norm() / (n as f64).sqrt();
        if !(rnorm > 1e-12 * (1.0 + d.y.norm() / (n as f64).sqrt())) {
            return Err(Error::InvalidParameter("zero residual; standardized values undefined".into()));
        }
        let tau = tau_hat(&d.y, &d.x, &fit)?;
        let adj = debias(&d.x, &d.y, &fit, &model, inst.normalization, true)?;
        let un = debias(&d.x, &d.y, &fit, &model, inst.normalization, false)?;
        let sd = |j: usize| model.cond_var(j).sqrt() / c;
        Ok(Some(QqReplica {
            adjusted: (0..p).map(|j| sd(j) * (adj.theta_d[j] - theta[j]) / tau).collect(),
            unadjusted: (0..p).map(|j| sd(j) * (un.theta_d[j] - theta[j]) / rnorm).collect(),
            active: fit.active_count,
        }))
    });
    let (kept, flagged) = partition(outcomes);

    let mut results = ResultTable::new("qq");
    let mut pooled = vec![vec![Vec::new(); 3]; 2];
    for (r, rep) in &kept {
        for j in 0..p {
            let g = group_of(theta[j]);
            for (m, vals) in [&rep.adjusted, &rep.unadjusted].into_iter().enumerate() {
                results.push(Some(*r), Some(j), GROUPS[g], METHODS[m], vals[j]);
                pooled[m][g].push(vals[j]);
            }
        }
    }

    let mut qq = CsvTable::new("qq.csv", &["method", "group", "rank", "value", "theoretical"]);
    let mut hist = CsvTable::new("histogram.csv", &["method", "group", "bin_lo", "bin_hi", "count"]);
    let mut groups = Vec::new();
    for (m, method) in METHODS.iter().enumerate() {
        for (g, group) in GROUPS.iter().enumerate() {
            let v = &pooled[m][g];
            if v.is_empty() {
                continue;
            }
            qq_rows(&mut qq, &[method, group], v);
            histogram_rows(&mut hist, &[method, group], v, &cfg.histogram);
            groups.push(QqGroupStats {
                method: method.to_string(),
                group: group.to_string(),
                count: v.len(),
                mean: mean(v),
                sd: std_dev(v),
                ks: ks_statistic_normal(v),
            });
        }
    }
    let summary = QqSummary {
        groups,
        replicas_used: kept.len(),
        mean_active_fraction: mean(&kept.iter().map(|(_, r)| r.active as f64 / n as f64).collect::<Vec<_>>()),
    };
    Ok(finish(results, vec![qq, hist], summary, flagged, cfg, start))
}
