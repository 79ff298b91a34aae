//! Covariance models, problem instances, and Gaussian random-design data.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{SeedSpec, Stream};

const SYMMETRY_TOL: f64 = 1e-10;
const SINGULAR_RATIO: f64 = 1e-12;

/// Population covariance together with the factorizations every other module needs.
///
/// All square roots are the symmetric ones, computed from a single symmetric
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    kappa_min: f64,
    kappa_max: f64,
    cond_var: Vec<f64>,
    diagonal: bool,
}

impl CovarianceModel {
    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn inv(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    pub fn kappa_cond(&self) -> f64 {
        self.kappa_max / self.kappa_min
    }

    /// Conditional variance Σ_{j|-j} = 1 / (Σ⁻¹)_{jj} (Schur complement).
    pub fn cond_var(&self, j: usize) -> f64 {
        self.cond_var[j]
    }

    pub fn cond_vars(&self) -> &[f64] {
        &self.cond_var
    }

    /// True when Σ has no off-diagonal entries; solvers use separable closed forms then.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn identity(p: usize) -> Self {
        factor_covariance(DMatrix::identity(p, p)).expect("identity is positive definite")
    }
}

/// Σ_ij = rho^{|i-j|}.
pub fn build_ar_covariance(rho: f64, p: usize) -> Result<CovarianceModel> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("AR correlation must satisfy |rho| < 1, got {rho}")));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("dimension p must be >= 1".into()));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    factor_covariance(sigma)
}

pub fn factor_covariance(sigma: DMatrix<f64>) -> Result<CovarianceModel> {
    let p = sigma.nrows();
    if p == 0 || sigma.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square and non-empty, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    let asym = (&sigma - sigma.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidParameter(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (&sigma + sigma.transpose()) * 0.5;
    let diagonal = (0..p).all(|j| (0..p).all(|i| i == j || sym[(i, j)] == 0.0));

    let eig = SymmetricEigen::new(sym.clone());
    let kappa_min = eig.eigenvalues.min();
    let kappa_max = eig.eigenvalues.max();
    if kappa_max <= 0.0 || kappa_min <= SINGULAR_RATIO * kappa_max {
        return Err(Error::SingularCovariance {
            min_eig: kappa_min,
            max_eig: kappa_max,
        });
    }

    let q = &eig.eigenvectors;
    let spectral = |f: &dyn Fn(f64) -> f64| -> DMatrix<f64> {
        let mut scaled = q.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(eig.eigenvalues[k]);
        }
        let m = &scaled * q.transpose();
        (&m + m.transpose()) * 0.5
    };
    let (sqrt, inv, inv_sqrt) = if diagonal {
        let d = sym.diagonal();
        (
            DMatrix::from_diagonal(&d.map(f64::sqrt)),
            DMatrix::from_diagonal(&d.map(|v| 1.0 / v)),
            DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt())),
        )
    } else {
        (
            spectral(&|l| l.sqrt()),
            spectral(&|l| 1.0 / l),
            spectral(&|l| 1.0 / l.sqrt()),
        )
    };
    let cond_var: Vec<f64> = (0..p).map(|j| 1.0 / inv[(j, j)]).collect();
    if cond_var.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::SingularCovariance {
            min_eig: kappa_min,
            max_eig: kappa_max,
        });
    }

    Ok(CovarianceModel {
        sigma: sym,
        sqrt,
        inv,
        inv_sqrt,
        kappa_min,
        kappa_max,
        cond_var,
        diagonal,
    })
}

/// Row scaling of the random design: x_i ~ N(0, Σ/n) or N(0, Σ/p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ByN,
    ByP,
}

impl Normalization {
    /// Divisor m in x_i ~ N(0, Σ/m).
    pub fn row_divisor(self, n: usize, p: usize) -> f64 {
        match self {
            Normalization::ByN => n as f64,
            Normalization::ByP => p as f64,
        }
    }

    /// Factor c with X = X'/c, where X' has rows N(0, Σ/n).
    ///
    /// The Σ/n formulas for debiasing and intervals carry over to the Σ/p design
    /// after the change of variables θ' = θ/c, λ' = cλ.
    pub fn design_scale(self, n: usize, p: usize) -> f64 {
        match self {
            Normalization::ByN => 1.0,
            Normalization::ByP => (p as f64 / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub theta_star: DVector<f64>,
    pub sigma_noise: f64,
    pub lambda: f64,
    pub n: usize,
    pub normalization: Normalization,
}

impl ProblemInstance {
    pub fn new(
        theta_star: DVector<f64>,
        sigma_noise: f64,
        lambda: f64,
        n: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        let inst = Self {
            theta_star,
            sigma_noise,
            lambda,
            n,
            normalization,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn p(&self) -> usize {
        self.theta_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p() == 0 {
            return Err(Error::InvalidParameter("n and p must be >= 1".into()));
        }
        if !(self.sigma_noise >= 0.0) || !self.sigma_noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and >= 0, got {}",
                self.sigma_noise
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("theta* has non-finite entries".into()));
        }
        Ok(())
    }

    /// The equivalent Σ/n instance (θ' = θ*/c, λ' = cλ). Identity for `ByN`.
    pub fn canonical(&self) -> ProblemInstance {
        let c = self.normalization.design_scale(self.n, self.p());
        ProblemInstance {
            theta_star: &self.theta_star / c,
            sigma_noise: self.sigma_noise,
            lambda: self.lambda * c,
            n: self.n,
            normalization: Normalization::ByN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Fill row-major so the stream order is independent of storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Rows iid N(0, Σ/m) with m = n or p according to the normalization.
pub fn sample_design(model: &CovarianceModel, instance: &ProblemInstance, seed: &SeedSpec) -> Result<DMatrix<f64>> {
    if model.p() != instance.p() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}-dimensional but theta* has length {}",
            model.p(),
            instance.p()
        )));
    }
    let n = instance.n;
    let p = model.p();
    let mut rng = seed.rng(Stream::Design, 0);
    let g = standard_normal_matrix(&mut rng, n, p);
    let scale = 1.0 / instance.normalization.row_divisor(n, p).sqrt();
    let x = if model.is_diagonal() {
        let mut x = g;
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= model.sqrt()[(j, j)] * scale;
        }
        x
    } else {
        (g * model.sqrt()) * scale
    };
    Ok(x)
}

/// y = Xθ* + σz with z ~ N(0, I_n).
pub fn generate_data(instance: &ProblemInstance, x: DMatrix<f64>, seed: &SeedSpec) -> Result<Dataset> {
    if x.nrows() != instance.n || x.ncols() != instance.p() {
        return Err(Error::DimensionMismatch(format!(
            "design is {}x{}, instance expects {}x{}",
            x.nrows(),
            x.ncols(),
            instance.n,
            instance.p()
        )));
    }
    let mut rng = seed.rng(Stream::Noise, 0);
    let z = DVector::from_fn(instance.n, |_, _| rng.sample(StandardNormal));
    let y = &x * &instance.theta_star + &z * instance.sigma_noise;
    Ok(Dataset { x, y, z })
}

/// Draws a design and response in one step.
pub fn sample_dataset(model: &CovarianceModel, instance: &ProblemInstance, seed: &SeedSpec) -> Result<Dataset> {
    let x = sample_design(model, instance, seed)?;
    generate_data(instance, x, seed)
}

/// x̆⊥_j = x̆_j − X_{−j}(Σ_{−j,−j})⁻¹Σ_{−j,j}.
///
/// Uses the identity (Σ_{−j,−j})⁻¹Σ_{−j,j} = −(Σ⁻¹)_{−j,j} / (Σ⁻¹)_{jj}, so the
/// residualized column is Σ_{j|−j} · X (Σ⁻¹ e_j).
pub fn residualized_feature(x: &DMatrix<f64>, model: &CovarianceModel, j: usize) -> Result<DVector<f64>> {
    let p = model.p();
    if x.ncols() != p {
        return Err(Error::DimensionMismatch(format!("design has {} columns, covariance is {p}-dimensional", x.ncols())));
    }
    if p < 2 {
        return Err(Error::InvalidParameter("residualization needs p >= 2".into()));
    }
    if j >= p {
        return Err(Error::InvalidParameter(format!("coordinate {j} out of range for p = {p}")));
    }
    if model.is_diagonal() {
        return Ok(x.column(j).into_owned());
    }
    let w = model.inv().column(j) * model.cond_var(j);
    Ok(x * w)
}

/// Covariance source as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    Ar { rho: f64, p: Option<usize> },
    Identity { p: Option<usize> },
    Dense { path: PathBuf },
}

impl CovarianceSpec {
    /// Builds the model. `p` is used when the spec leaves the dimension implicit.
    pub fn build(&self, p: usize, base_dir: Option<&Path>) -> Result<CovarianceModel> {
        let check = |q: Option<usize>| -> Result<usize> {
            match q {
                Some(q) if q != p => Err(Error::Config(format!("covariance dimension {q} does not match p = {p}"))),
                _ => Ok(p),
            }
        };
        match self {
            CovarianceSpec::Ar { rho, p: q } => build_ar_covariance(*rho, check(*q)?),
            CovarianceSpec::Identity { p: q } => Ok(CovarianceModel::identity(check(*q)?)),
            CovarianceSpec::Dense { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let m = crate::io::read_matrix_csv(&full)?;
                if m.nrows() != p {
                    return Err(Error::Config(format!("covariance file is {}x{}, expected p = {p}", m.nrows(), m.ncols())));
                }
                factor_covariance(m)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ar_two_by_two() {
        let m = build_ar_covariance(0.5, 2).unwrap();
        assert_eq!(m.sigma()[(0, 1)], 0.5);
        assert_eq!(m.sigma()[(1, 1)], 1.0);
        assert_abs_diff_eq!(m.cond_var(0), 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(m.cond_var(1), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn zero_correlation_is_identity() {
        let m = build_ar_covariance(0.0, 3).unwrap();
        assert_eq!(m.sigma(), &DMatrix::<f64>::identity(3, 3));
        assert!(m.is_diagonal());
    }

    #[test]
    fn rejects_unit_correlation() {
        assert!(matches!(build_ar_covariance(1.0, 3), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_ar_covariance(-1.2, 3), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn identity_factors_are_identity() {
        let m = CovarianceModel::identity(4);
        let i = DMatrix::<f64>::identity(4, 4);
        assert_eq!(m.sqrt(), &i);
        assert_eq!(m.inv(), &i);
        assert_eq!(m.inv_sqrt(), &i);
    }

    #[test]
    fn diagonal_sqrt() {
        let m = factor_covariance(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert_eq!(m.sqrt()[(0, 0)], 2.0);
        assert_eq!(m.sqrt()[(1, 1)], 3.0);
        assert_eq!(m.sqrt()[(0, 1)], 0.0);
    }

    #[test]
    fn ar_reconstruction() {
        let m = build_ar_covariance(0.5, 50).unwrap();
        let rec = m.sqrt() * m.sqrt();
        assert!((rec - m.sigma()).amax() < 1e-8);
        let eye = m.sqrt() * m.inv_sqrt();
        assert!((eye - DMatrix::<f64>::identity(50, 50)).amax() < 1e-8);
        assert!(m.kappa_min() > 0.0 && m.kappa_min() <= m.kappa_max());
    }

    #[test]
    fn singular_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(factor_covariance(s), Err(Error::SingularCovariance { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(factor_covariance(asym), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn cond_var_matches_schur_complement() {
        let m = build_ar_covariance(0.7, 6).unwrap();
        let s = m.sigma();
        for j in 0..6 {
            let others: Vec<usize> = (0..6).filter(|&k| k != j).collect();
            let sub = DMatrix::from_fn(5, 5, |a, b| s[(others[a], others[b])]);
            let cross = DVector::from_fn(5, |a, _| s[(others[a], j)]);
            let beta = sub.lu().solve(&cross).unwrap();
            let schur = s[(j, j)] - cross.dot(&beta);
            assert_abs_diff_eq!(m.cond_var(j), schur, epsilon = 1e-12);
        }
    }

    fn instance(p: usize, n: usize, norm: Normalization) -> ProblemInstance {
        ProblemInstance::new(DVector::from_element(p, 1.0), 0.5, 1.0, n, norm).unwrap()
    }

    #[test]
    fn design_is_deterministic() {
        let m = build_ar_covariance(0.5, 5).unwrap();
        let inst = instance(5, 7, Normalization::ByN);
        let a = sample_design(&m, &inst, &SeedSpec::new(3)).unwrap();
        let b = sample_design(&m, &inst, &SeedSpec::new(3)).unwrap();
        assert_eq!(a, b);
        let c = sample_design(&m, &inst, &SeedSpec::new(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn data_identity_holds() {
        let m = build_ar_covariance(0.3, 5).unwrap();
        let inst = instance(5, 9, Normalization::ByP);
        let d = sample_dataset(&m, &inst, &SeedSpec::new(11)).unwrap();
        let resid = &d.y - &d.x * &inst.theta_star - &d.z * inst.sigma_noise;
        assert!(resid.amax() < 1e-14);
    }

    #[test]
    fn noiseless_and_null_signal() {
        let m = CovarianceModel::identity(3);
        let mut inst = instance(3, 4, Normalization::ByN);
        inst.sigma_noise = 0.0;
        let d = sample_dataset(&m, &inst, &SeedSpec::new(1)).unwrap();
        assert_eq!(d.y, &d.x * &inst.theta_star);

        inst.sigma_noise = 2.0;
        inst.theta_star.fill(0.0);
        let d = sample_dataset(&m, &inst, &SeedSpec::new(1)).unwrap();
        assert_eq!(d.y, &d.z * 2.0);
    }

    #[test]
    fn residualization_p2() {
        let m = build_ar_covariance(0.5, 2).unwrap();
        let inst = instance(2, 10, Normalization::ByN);
        let x = sample_design(&m, &inst, &SeedSpec::new(5)).unwrap();
        let r = residualized_feature(&x, &m, 0).unwrap();
        let expected = x.column(0) - x.column(1) * 0.5;
        assert!((r - expected).amax() < 1e-14);
    }

    #[test]
    fn residualization_diagonal_noop_and_errors() {
        let m = factor_covariance(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]))).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(residualized_feature(&x, &m, 1).unwrap(), x.column(1).into_owned());
        let m1 = CovarianceModel::identity(1);
        assert!(residualized_feature(&DMatrix::zeros(3, 1), &m1, 0).is_err());
    }

    #[test]
    fn canonical_rescales_by_p() {
        let inst = ProblemInstance::new(DVector::from_element(100, 25.0), 1.0, 4.0, 25, Normalization::ByP).unwrap();
        let c = inst.canonical();
        assert_abs_diff_eq!(c.lambda, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.theta_star[0], 12.5, epsilon = 1e-12);
        assert_eq!(c.normalization, Normalization::ByN);
    }
}
