//! Standard Gaussian width of the signed-support cone
//! K(x, Σ) = {v : ⟨x_S, w_S⟩ + ‖w_{S^c}‖₁ ≤ 0, w = Σ^{−1/2} v}.
//!
//! A sample is max ⟨v, g⟩/p over K ∩ {‖v‖² ≤ p}, which equals ‖Π_K g‖/√p.
//! We minimize the distance from g to the polar cone
//! K° = Σ^{−1/2}·cone{(x_S, c) : ‖c‖∞ ≤ 1} by accelerated projected gradient.
//! The residual g − Mz is pushed onto the boundary of K to give a feasible v,
//! so the reported value is a certified lower bound; ‖g − Mz‖/√p is an upper
//! bound and their gap is the stopping rule.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CovarianceModel;
use crate::seed::{SeedSpec, Stream};
use crate::stats::{mean, quantile_sorted};

/// Entrywise sign with sign(0) = 0.
pub fn signed_support(theta_star: &DVector<f64>) -> Result<DVector<f64>> {
    let x = theta_star.map(|t| {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptySupport);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct ConeSpec<'a> {
    x: DVector<f64>,
    support: Vec<usize>,
    off_support: Vec<usize>,
    model: &'a CovarianceModel,
}

impl<'a> ConeSpec<'a> {
    pub fn new(x: DVector<f64>, model: &'a CovarianceModel) -> Result<Self> {
        if x.len() != model.p() {
            return Err(Error::DimensionMismatch(format!("sign vector has length {}, covariance is {}-dimensional", x.len(), model.p())));
        }
        if x.iter().any(|&v| v != 0.0 && v != 1.0 && v != -1.0) {
            return Err(Error::InvalidParameter("sign vector entries must be -1, 0 or 1".into()));
        }
        let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let off_support = (0..x.len()).filter(|&j| x[j] == 0.0).collect();
        Ok(Self {
            x,
            support,
            off_support,
            model,
        })
    }

    pub fn from_theta(theta_star: &DVector<f64>, model: &'a CovarianceModel) -> Result<Self> {
        Self::new(signed_support(theta_star)?, model)
    }

    pub fn signs(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    /// F(v; x, Σ) = ⟨x_S, w_S⟩ + ‖w_{S^c}‖₁ with w = Σ^{−1/2} v.
    pub fn constraint(&self, v: &DVector<f64>) -> f64 {
        let w = self.apply_inv_sqrt(v);
        self.h(&w)
    }

    fn h(&self, w: &DVector<f64>) -> f64 {
        self.support.iter().map(|&j| self.x[j] * w[j]).sum::<f64>() + self.off_support.iter().map(|&j| w[j].abs()).sum::<f64>()
    }

    fn apply_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.model.is_diagonal() {
            v.component_mul(&self.model.inv_sqrt().diagonal())
        } else {
            self.model.inv_sqrt() * v
        }
    }

    fn apply_sqrt(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.model.is_diagonal() {
            w.component_mul(&self.model.sqrt().diagonal())
        } else {
            self.model.sqrt() * w
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct WidthConfig {
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Relative gap between the certified lower and the dual upper bound.
    pub gap_tol: f64,
}

impl Default for WidthConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            max_iter: 5000,
            gap_tol: 1e-6,
        }
    }
}

impl WidthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.feas_tol > 0.0) || !(self.gap_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("width config needs feas_tol > 0, gap_tol > 0, max_iter >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthSample {
    /// Certified lower bound (1/p)⟨v̂, g⟩.
    pub value: f64,
    /// Dual upper bound ‖g − Mz‖/√p.
    pub upper: f64,
    #[serde(skip)]
    pub v: DVector<f64>,
    /// F(v̂; x, Σ) / ‖v̂‖ after the boundary correction.
    pub cone_violation: f64,
    /// ‖v̂‖²/p − 1.
    pub ball_violation: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Euclidean projection onto {(t, c) : |c_j| ≤ a·t}.
fn project(t0: f64, c0: &mut [f64], a: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(c0.iter().map(|c| c.abs()));
    scratch.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap());
    let mut t = t0.max(0.0);
    let mut acc = 0.0;
    for k in 0..=scratch.len() {
        let cand = (t0 + a * acc) / (1.0 + k as f64 * a * a);
        let upper_ok = k == 0 || scratch[k - 1] > a * cand;
        let lower_ok = k == scratch.len() || scratch[k] <= a * cand;
        if upper_ok && lower_ok {
            t = cand;
            break;
        }
        if k < scratch.len() {
            acc += scratch[k];
        }
    }
    let t = t.max(0.0);
    let bound = a * t;
    for c in c0.iter_mut() {
        *c = c.clamp(-bound, bound);
    }
    t
}

/// One realization of the inner maximization for a given g.
pub fn sample_width(cone: &ConeSpec<'_>, g: &DVector<f64>, cfg: &WidthConfig) -> Result<WidthSample> {
    cfg.validate()?;
    let p = cone.p();
    if g.len() != p {
        return Err(Error::DimensionMismatch(format!("g has length {}, cone is {}-dimensional", g.len(), p)));
    }
    let s = cone.support.len();
    let a = 1.0 / (s as f64).sqrt();
    let off = &cone.off_support;
    let m = off.len();
    let xs_unit: Vec<(usize, f64)> = cone.support.iter().map(|&j| (j, cone.x[j] * a)).collect();

    // z = (t, c) with M z = Σ^{−1/2}(t·x_S/√s ; c).
    let embed = |t: f64, c: &[f64]| -> DVector<f64> {
        let mut u = DVector::zeros(p);
        for &(j, xj) in &xs_unit {
            u[j] = t * xj;
        }
        for (k, &j) in off.iter().enumerate() {
            u[j] = c[k];
        }
        cone.apply_inv_sqrt(&u)
    };

    let lip = 1.0 / cone.model.kappa_min();
    let step = 1.0 / lip;
    let sqrt_p = (p as f64).sqrt();

    let mut t = 0.0;
    let mut c = vec![0.0; m];
    let mut yt = t;
    let mut yc = c.clone();
    let mut momentum = 1.0f64;
    let mut scratch = Vec::with_capacity(m);
    let mut prev_f = f64::INFINITY;

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut upper = g.norm() / sqrt_p;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        // Gradient step at the extrapolated point.
        let r = g - embed(yt, &yc);
        let back = cone.apply_inv_sqrt(&r);
        let grad_t = -xs_unit.iter().map(|&(j, xj)| xj * back[j]).sum::<f64>();
        let mut nc: Vec<f64> = off.iter().enumerate().map(|(k, &j)| yc[k] + step * back[j]).collect();
        let nt = project(yt - step * grad_t, &mut nc, a, &mut scratch);

        let resid = g - embed(nt, &nc);
        let f = 0.5 * resid.norm_squared();
        upper = upper.min(resid.norm() / sqrt_p);

        // Adaptive restart on objective increase.
        let next_m = if f > prev_f { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) };
        let beta = if f > prev_f { 0.0 } else { (momentum - 1.0) / next_m };
        yt = nt + beta * (nt - t);
        for k in 0..m {
            yc[k] = nc[k] + beta * (nc[k] - c[k]);
        }
        t = nt;
        c = nc;
        momentum = next_m;
        prev_f = f;

        if iterations % 5 == 0 || iterations == cfg.max_iter {
            let (lb, v) = certify(cone, &resid, g);
            if best.as_ref().is_none_or(|(b, _)| lb > *b) {
                best = Some((lb, v));
            }
            let lb = best.as_ref().unwrap().0;
            if upper - lb <= cfg.gap_tol * upper.max(1e-12) {
                converged = true;
                break;
            }
        }
    }

    let (value, v) = best.unwrap_or_else(|| (0.0, DVector::zeros(p)));
    let vn = v.norm();
    let cone_violation = if vn > 0.0 { cone.constraint(&v).max(0.0) / vn } else { 0.0 };
    let ball_violation = v.norm_squared() / p as f64 - 1.0;
    let feasible = cone_violation <= cfg.feas_tol && ball_violation <= cfg.feas_tol;
    Ok(WidthSample {
        value,
        upper: upper.max(value),
        v,
        cone_violation,
        ball_violation,
        feasible,
        converged,
        iterations,
    })
}

/// Moves the candidate direction onto the cone and scales it to the ball.
fn certify(cone: &ConeSpec<'_>, r: &DVector<f64>, g: &DVector<f64>) -> (f64, DVector<f64>) {
    let p = cone.p();
    let mut w = cone.apply_inv_sqrt(r);
    let h = cone.h(&w);
    if h > 0.0 {
        let s = cone.support.len() as f64;
        for &j in &cone.support {
            w[j] -= cone.x[j] * h / s;
        }
    }
    let v = cone.apply_sqrt(&w);
    let nv = v.norm();
    if nv == 0.0 {
        return (0.0, DVector::zeros(p));
    }
    let v = v * ((p as f64).sqrt() / nv);
    let val = v.dot(g) / p as f64;
    if val > 0.0 {
        (val, v)
    } else {
        (0.0, DVector::zeros(p))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthEstimate {
    pub samples: Vec<WidthSample>,
    pub n_samples: usize,
    pub mean: f64,
    pub median: f64,
    /// (level, value) pairs over accepted samples.
    pub quantiles: Vec<(f64, f64)>,
    /// p·median², comparable with n.
    pub p_median_sq: f64,
    /// median², comparable with n/p.
    pub median_sq: f64,
    pub flagged: usize,
    pub unreliable: bool,
}

impl WidthEstimate {
    /// Rows `sample_idx,value,p_times_value_sq,feasible,iterations`.
    pub fn write_csv(&self, path: &Path, p: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_idx", "value", "p_times_value_sq", "feasible", "iterations"])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.value.to_string(),
                (p as f64 * s.value * s.value).to_string(),
                ((s.feasible && s.converged) as u8).to_string(),
                s.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draw i uses stream `(Width, i)`, so prefixes agree across sample counts.
pub fn draw_width_gaussian(seed: &SeedSpec, i: usize, p: usize) -> DVector<f64> {
    let mut rng = seed.rng(Stream::Width, i as u64);
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn estimate_width(cone: &ConeSpec<'_>, n_samples: usize, seed: &SeedSpec, cfg: &WidthConfig) -> Result<WidthEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    cfg.validate()?;
    let p = cone.p();
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| sample_width(cone, &draw_width_gaussian(seed, i, p), cfg))
        .collect::<Result<Vec<_>>>()?;
    let accepted: Vec<f64> = samples.iter().filter(|s| s.feasible && s.converged).map(|s| s.value).collect();
    let flagged = n_samples - accepted.len();
    let mut sorted = accepted.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (mean_v, median, quantiles) = if sorted.is_empty() {
        (f64::NAN, f64::NAN, Vec::new())
    } else {
        let qs = [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|&l| (l, quantile_sorted(&sorted, l))).collect();
        (mean(&accepted), quantile_sorted(&sorted, 0.5), qs)
    };
    if flagged > 0 {
        log::warn!("{flagged} of {n_samples} width samples flagged");
    }
    Ok(WidthEstimate {
        n_samples,
        mean: mean_v,
        median,
        quantiles,
        p_median_sq: p as f64 * median * median,
        median_sq: median * median,
        flagged,
        unreliable: flagged * 10 > n_samples,
        samples,
    })
}
