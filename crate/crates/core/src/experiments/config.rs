use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::FixedPointConfig;
use crate::model::{CovarianceModel, CovarianceSpec, Normalization, ProblemInstance};
use crate::seed::{SeedSpec, Stream};
use crate::solvers::SolverConfig;
use crate::width::WidthConfig;

/// Where the s nonzero coordinates of θ* go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Seeded uniform shuffle; half the signs positive, also shuffled.
    #[default]
    Random,
    /// Coordinates 0..s with alternating signs.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub p: usize,
    pub n: usize,
    pub s: usize,
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub placement: Placement,
    /// 0-based coordinate of interest.
    #[serde(default)]
    pub target: Option<usize>,
    /// Whether the target is forced into the support (with value +μ) or out of it.
    #[serde(default)]
    pub target_active: bool,
}

fn default_normalization() -> Normalization {
    Normalization::ByN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_values: Vec<usize>,
    pub mu_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointMethod {
    /// Closed form when Σ = I and α = 0, Monte Carlo otherwise.
    #[default]
    Auto,
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WidthSettings {
    pub n_samples: usize,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for WidthSettings {
    fn default() -> Self {
        let c = WidthConfig::default();
        Self {
            n_samples: 500,
            feas_tol: c.feas_tol,
            max_iter: c.max_iter,
            gap_tol: c.gap_tol,
        }
    }
}

impl WidthSettings {
    pub fn solver(&self) -> WidthConfig {
        WidthConfig {
            feas_tol: self.feas_tol,
            max_iter: self.max_iter,
            gap_tol: self.gap_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSettings {
    pub bins: usize,
    /// Bins cover [−range, range].
    pub range: f64,
}

impl Default for HistogramSettings {
    fn default() -> Self {
        Self { bins: 40, range: 5.0 }
    }
}

/// One experiment run, fully determined together with the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub n_sim: usize,
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub instance: InstanceSpec,
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub fixed_point_method: FixedPointMethod,
    /// Huber smoothing for the fixed point; 0 gives the Lasso.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub width: WidthSettings,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub histogram: HistogramSettings,
    /// Directory that relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_q() -> Vec<f64> {
    vec![0.05]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.instance;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sim == 0 {
            return bad("n_sim must be >= 1".into());
        }
        if i.p == 0 || i.n == 0 {
            return bad("p and n must be >= 1".into());
        }
        if i.s > i.p {
            return bad(format!("s = {} exceeds p = {}", i.s, i.p));
        }
        if !(i.mu.is_finite() && i.mu >= 0.0) {
            return bad("mu must be finite and >= 0".into());
        }
        if !(i.sigma.is_finite() && i.sigma >= 0.0) {
            return bad("sigma must be finite and >= 0".into());
        }
        if !(i.lambda.is_finite() && i.lambda > 0.0) {
            return bad("lambda must be finite and > 0".into());
        }
        if let Some(t) = i.target {
            if t >= i.p {
                return bad(format!("target {t} out of range for p = {}", i.p));
            }
            if i.target_active && i.s == 0 {
                return bad("target_active needs s >= 1".into());
            }
            if !i.target_active && i.s == i.p {
                return bad("an inactive target needs s < p".into());
            }
        }
        if self.q.is_empty() || self.q.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return bad("q levels must lie in (0,1)".into());
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0".into());
        }
        if let Some(g) = &self.grid {
            if g.n_values.is_empty() || g.mu_values.is_empty() || g.n_values.contains(&0) {
                return bad("grid needs nonempty n_values (all >= 1) and mu_values".into());
            }
            if g.mu_values.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return bad("grid mu values must be finite and >= 0".into());
            }
        }
        if self.width.n_samples == 0 {
            return bad("width.n_samples must be >= 1".into());
        }
        if self.histogram.bins == 0 || !(self.histogram.range > 0.0) {
            return bad("histogram needs bins >= 1 and range > 0".into());
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.width.solver().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn master_seed(&self) -> SeedSpec {
        SeedSpec::new(self.seed)
    }

    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        self.covariance
            .build(self.instance.p, self.base_dir.as_deref())
            .map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(format!("covariance: {other}")),
            })
    }

    /// Sign pattern of θ* with unit magnitude; θ* = μ·pattern.
    pub fn support_pattern(&self) -> DVector<f64> {
        support_pattern(&self.instance, &self.master_seed())
    }

    pub fn theta_star(&self, mu: f64) -> DVector<f64> {
        self.support_pattern() * mu
    }

    pub fn problem(&self, mu: f64, n: usize) -> Result<ProblemInstance> {
        let i = &self.instance;
        ProblemInstance::new(self.theta_star(mu), i.sigma, i.lambda, n, i.normalization)
    }
}

/// Seeded placement: shuffle the candidate coordinates, take the first s
/// (with the target forced in or out), then shuffle ⌈s/2⌉ plus signs and
/// s − ⌈s/2⌉ minus signs over the support. An active target gets a plus sign.
pub fn support_pattern(spec: &InstanceSpec, seed: &SeedSpec) -> DVector<f64> {
    let p = spec.p;
    let s = spec.s;
    let mut x = DVector::zeros(p);
    if s == 0 {
        return x;
    }
    match spec.placement {
        Placement::First => {
            for j in 0..s {
                x[j] = if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            if let Some(t) = spec.target {
                if spec.target_active && x[t] < 0.0 {
                    x[t] = 1.0;
                } else if spec.target_active && x[t] == 0.0 {
                    // Move one support slot onto the target.
                    let last = (0..p).rfind(|&j| x[j] != 0.0).unwrap();
                    x[last] = 0.0;
                    x[t] = 1.0;
                } else if !spec.target_active && x[t] != 0.0 {
                    let free = (0..p).find(|&j| x[j] == 0.0).unwrap();
                    x[free] = x[t];
                    x[t] = 0.0;
                }
            }
            x
        }
        Placement::Random => {
            let mut rng = seed.rng(Stream::Support, 0);
            let mut cand: Vec<usize> = (0..p).filter(|&j| Some(j) != spec.target).collect();
            cand.shuffle(&mut rng);
            let mut support: Vec<usize> = Vec::with_capacity(s);
            if spec.target_active {
                if let Some(t) = spec.target {
                    support.push(t);
                }
            }
            support.extend(cand.into_iter().take(s - support.len()));
            let plus = s.div_ceil(2);
            let mut signs: Vec<f64> = (0..s).map(|k| if k < plus { 1.0 } else { -1.0 }).collect();
            signs.shuffle(&mut rng);
            if spec.target_active && spec.target.is_some() && signs[0] < 0.0 {
                let k = signs.iter().position(|&v| v > 0.0).unwrap();
                signs.swap(0, k);
            }
            for (j, sg) in support.into_iter().zip(signs) {
                x[j] = sg;
            }
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
n_sim = 10
[instance]
p = 100
n = 25
s = 20
mu = 25.0
sigma = 1.0
lambda = 4.0
normalization = "by_p"
target = 49
[covariance]
kind = "ar"
rho = 0.5
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.q, vec![0.05]);
        assert_eq!(cfg.instance.normalization, Normalization::ByP);
        assert_eq!(cfg.solver, SolverConfig::default());
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(ExperimentConfig::from_toml_str(&format!("{BASE}\n[bogus]\nx=1")), Err(Error::Config(_))));
        let bad = BASE.replace("s = 20", "s = 200");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = BASE.replace("target = 49", "target = 100");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn pattern_counts_and_target() {
        let mut cfg = ExperimentConfig::from_toml_str(BASE).unwrap();
        let x = cfg.support_pattern();
        assert_eq!(x.iter().filter(|v| **v > 0.0).count(), 10);
        assert_eq!(x.iter().filter(|v| **v < 0.0).count(), 10);
        assert_eq!(x[49], 0.0);
        assert_eq!(x, cfg.support_pattern());
        cfg.instance.target_active = true;
        let y = cfg.support_pattern();
        assert_eq!(y[49], 1.0);
        assert_eq!(y.iter().filter(|v| **v != 0.0).count(), 20);
        assert_eq!(y.iter().filter(|v| **v > 0.0).count(), 10);
    }

    #[test]
    fn first_placement_respects_target() {
        let mut spec = ExperimentConfig::from_toml_str(BASE).unwrap().instance;
        spec.placement = Placement::First;
        spec.target = Some(3);
        spec.target_active = true;
        let x = support_pattern(&spec, &SeedSpec::new(0));
        assert_eq!(x[3], 1.0);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 20);
        spec.target_active = false;
        let x = support_pattern(&spec, &SeedSpec::new(0));
        assert_eq!(x[3], 0.0);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 20);
    }
}
