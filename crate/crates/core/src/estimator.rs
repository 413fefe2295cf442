//! Partitioned series least squares.
//!
//! The linear block is first purged of its projection on the series design,
//! `W - MW`, and the constant coefficients are obtained from the regression of
//! `y - My` on it. The series coefficients follow from regressing
//! `y - W gamma` on the design. This equals the joint least-squares fit of `y`
//! on `[W, P]`, and it yields `W - MW` for the covariance estimators at no
//! extra cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DomainMode};
use crate::design::{build_design, DesignMatrix, Dataset, SpecSet};
use crate::error::{PlvcError, Result};
use crate::linalg::{spd_inverse, PivotedQr, DEFAULT_RANK_TOL};

/// Relative tolerance below which a purged linear-block column counts as
/// lying in the varying-coefficient space.
pub const COLLINEARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Divide the RSS by `n - q - rank(P)` instead of `n` for the error variance.
    pub dof_correction: bool,
    pub domain: DomainMode,
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dof_correction: true,
            domain: DomainMode::Clamp,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub gamma_hat: DVector<f64>,
    pub alpha_hat: DVector<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub phi_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    /// Sandwich estimate of the asymptotic covariance of sqrt(n)(gamma_hat - gamma).
    pub sigma_hat: DMatrix<f64>,
    pub sigma2_hat: f64,
    /// W - MW.
    pub w_resid: DMatrix<f64>,
    pub design_rank: usize,
    pub block_offsets: Vec<usize>,
    pub specs: SpecSet,
    pub linear_labels: Vec<String>,
    pub varying_labels: Vec<String>,
    pub options: FitOptions,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn q(&self) -> usize {
        self.gamma_hat.len()
    }

    pub fn d(&self) -> usize {
        self.specs.len()
    }

    /// sqrt(Sigma_jj / n).
    pub fn standard_errors(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.q())
            .map(|j| (self.sigma_hat[(j, j)] / n).max(0.0).sqrt())
            .collect()
    }

    pub fn t_statistics(&self) -> Vec<f64> {
        self.standard_errors()
            .iter()
            .zip(self.gamma_hat.iter())
            .map(|(se, g)| g / se)
            .collect()
    }

    pub fn alpha_block(&self, l: usize) -> &[f64] {
        &self.alpha_hat.as_slice()[self.block_offsets[l]..self.block_offsets[l + 1]]
    }

    /// Estimated coefficient function `l` (0 = varying intercept) at `z`.
    pub fn beta_at(&self, l: usize, z: f64) -> Result<f64> {
        beta_at(self, l, z)
    }
}

/// Column-space projection `M a` of every column of `a`.
pub fn project(design: &DesignMatrix, a: &DMatrix<f64>) -> DMatrix<f64> {
    PivotedQr::new(&design.p, DEFAULT_RANK_TOL).project(a)
}

pub fn fit(ds: &Dataset, specs: &[BasisSpec], opts: &FitOptions) -> Result<FitResult> {
    let design = build_design(ds, specs, opts.domain)?;
    fit_design(ds, &design, opts)
}

/// Fit with a prebuilt design (rows must match `ds`).
pub fn fit_design(ds: &Dataset, design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult> {
    let labels = ds.labels();
    partitioned_fit(
        ds.y(),
        ds.w(),
        design,
        &labels.linear,
        &labels.varying,
        opts,
    )
}

pub(crate) fn partitioned_fit(
    y: &DVector<f64>,
    w: &DMatrix<f64>,
    design: &DesignMatrix,
    linear_labels: &[String],
    varying_labels: &[String],
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = y.len();
    let q = w.ncols();
    let p_qr = PivotedQr::new(&design.p, opts.rank_tol);
    let rank = p_qr.rank();
    if n <= q + rank {
        return Err(PlvcError::NoDegreesOfFreedom { n, params: q + rank });
    }

    let w_resid = p_qr.annihilate(w);
    let y_resid = p_qr.residual_vec(y);

    let gamma_hat = if q == 0 {
        DVector::zeros(0)
    } else {
        let scale = (0..q).map(|j| w.column(j).norm()).fold(0.0, f64::max);
        let w_qr = PivotedQr::with_threshold(&w_resid, COLLINEARITY_TOL * scale);
        if w_qr.rank() < q {
            return Err(PlvcError::Collinear {
                columns: w_qr
                    .dependent_columns()
                    .into_iter()
                    .map(|j| linear_labels.get(j).cloned().unwrap_or_else(|| format!("w{}", j + 1)))
                    .collect(),
            });
        }
        w_qr.solve(&y_resid)
    };

    let partial = y - w * &gamma_hat;
    let alpha_hat = p_qr.solve(&partial);
    let fitted = w * &gamma_hat + &design.p * &alpha_hat;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let (phi_hat, omega_hat, sigma_hat) = sandwich(&w_resid, &residuals)?;
    let df = if opts.dof_correction { n - q - rank } else { n };
    let sigma2_hat = rss / df as f64;

    Ok(FitResult {
        gamma_hat,
        alpha_hat,
        residuals,
        fitted,
        rss,
        r_squared,
        phi_hat,
        omega_hat,
        sigma_hat,
        sigma2_hat,
        w_resid,
        design_rank: rank,
        block_offsets: design.block_offsets.clone(),
        specs: design.specs.clone(),
        linear_labels: linear_labels.to_vec(),
        varying_labels: varying_labels.to_vec(),
        options: *opts,
    })
}

/// `(Phi, Omega, Phi^-1 Omega Phi^-1)` from the purged linear block and the
/// residuals, with `Phi = n^-1 sum e_i e_i'` and `Omega = n^-1 sum u_i^2 e_i e_i'`.
pub fn sandwich(
    w_resid: &DMatrix<f64>,
    residuals: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = w_resid.nrows() as f64;
    let q = w_resid.ncols();
    let phi = w_resid.transpose() * w_resid / n;
    let mut weighted = w_resid.clone();
    for (i, u) in residuals.iter().enumerate() {
        let u2 = u * u;
        for j in 0..q {
            weighted[(i, j)] *= u2;
        }
    }
    let omega = w_resid.transpose() * &weighted / n;
    let phi_inv = spd_inverse(&phi).ok_or_else(|| PlvcError::Collinear {
        columns: (1..=q).map(|j| format!("w{j}")).collect(),
    })?;
    let sigma = &phi_inv * &omega * &phi_inv;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok((phi, omega, sigma))
}

/// Heteroskedasticity-robust covariance `Phi^-1 Omega Phi^-1`, recomputed from
/// the fit's residuals.
pub fn gamma_covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    sandwich(&fit.w_resid, &fit.residuals).map(|(_, _, s)| s)
}

/// `sigma2 * Phi^-1`.
pub fn homoskedastic_from(phi: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    let inv = spd_inverse(phi).ok_or_else(|| PlvcError::Collinear {
        columns: (1..=phi.nrows()).map(|j| format!("w{j}")).collect(),
    })?;
    Ok(inv * sigma2)
}

/// Covariance implied by homoskedastic errors, the plug-in inverse of the
/// efficiency bound.
pub fn homoskedastic_covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    homoskedastic_from(&fit.phi_hat, fit.sigma2_hat)
}

/// `p_l(z)' alpha_l`.
pub fn beta_at(fit: &FitResult, l: usize, z: f64) -> Result<f64> {
    let spec = fit
        .specs
        .get(l)
        .ok_or_else(|| PlvcError::Dimension(format!("block {l} out of range ({} blocks)", fit.d())))?;
    let basis = spec.eval(z, fit.options.domain)?;
    Ok(basis
        .iter()
        .zip(fit.alpha_block(l))
        .map(|(b, a)| b * a)
        .sum())
}

/// Fitted conditional variance curve, clamped into `[eta_lo, eta_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    pub spec: BasisSpec,
    pub coefficients: Vec<f64>,
    pub eta_lo: f64,
    pub eta_hi: f64,
}

/// Floor on the lower clamp bound of a variance curve.
pub const VARIANCE_FLOOR: f64 = 1e-8;

impl VarianceModel {
    /// Constant variance `v`.
    pub fn constant(v: f64) -> Self {
        Self {
            spec: BasisSpec::power(0),
            coefficients: vec![v],
            eta_lo: v,
            eta_hi: v,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let raw: f64 = match self.spec.eval(z, DomainMode::Clamp) {
            Ok(b) => b.iter().zip(&self.coefficients).map(|(b, c)| b * c).sum(),
            Err(_) => self.eta_lo,
        };
        raw.clamp(self.eta_lo, self.eta_hi)
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Least-squares regression of squared residuals on `spec(z)`. The curve is
/// clamped to the 5th and 95th percentiles of its values at the sample
/// points; the lower bound is never below `q05(u^2)` or `1e-8`.
pub fn estimate_variance_function(fit: &FitResult, z: &DVector<f64>, spec: &BasisSpec) -> Result<VarianceModel> {
    let n = fit.n();
    if z.len() != n {
        return Err(PlvcError::Dimension("index length differs from residuals".into()));
    }
    let k = spec.dimension();
    let mut b = DMatrix::zeros(n, k);
    let mut buf = vec![0.0; k];
    for i in 0..n {
        spec.eval_into(z[i], DomainMode::Clamp, &mut buf)?;
        for (j, v) in buf.iter().enumerate() {
            b[(i, j)] = *v;
        }
    }
    let u2 = fit.residuals.map(|u| u * u);
    let qr = PivotedQr::new(&b, DEFAULT_RANK_TOL);
    let coef = qr.solve(&u2);
    let fitted = &b * &coef;

    let mut sorted_u2: Vec<f64> = u2.iter().copied().collect();
    sorted_u2.sort_by(|a, b| a.total_cmp(b));
    let mut sorted_fit: Vec<f64> = fitted.iter().copied().collect();
    sorted_fit.sort_by(|a, b| a.total_cmp(b));

    let eta_lo = quantile(&sorted_fit, 0.05)
        .max(quantile(&sorted_u2, 0.05))
        .max(VARIANCE_FLOOR);
    let eta_hi = quantile(&sorted_fit, 0.95).max(eta_lo);
    Ok(VarianceModel {
        spec: spec.clone(),
        coefficients: coef.iter().copied().collect(),
        eta_lo,
        eta_hi,
    })
}

/// Feasible weighted fit: every term of the model is divided by
/// `sigma_i = sqrt(vm(z_i))` and the partitioned estimator is applied to the
/// transformed data. Residuals and covariances refer to the transformed model.
pub fn fit_weighted(ds: &Dataset, specs: &[BasisSpec], vm: &VarianceModel, opts: &FitOptions) -> Result<FitResult> {
    let mut design = build_design(ds, specs, opts.domain)?;
    let n = ds.n();
    let mut y = ds.y().clone();
    let mut w = ds.w().clone();
    for i in 0..n {
        let s2 = vm.eval(ds.z()[i]);
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(PlvcError::Config(format!("variance model not positive at z = {}", ds.z()[i])));
        }
        let inv = 1.0 / s2.sqrt();
        y[i] *= inv;
        for j in 0..w.ncols() {
            w[(i, j)] *= inv;
        }
        for j in 0..design.p.ncols() {
            design.p[(i, j)] *= inv;
        }
    }
    let labels = ds.labels();
    partitioned_fit(&y, &w, &design, &labels.linear, &labels.varying, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::uniform_specs;
    use crate::basis::BasisTemplate;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn noiseless(n: usize) -> (Dataset, SpecSet) {
        let mut s = 7;
        let z = DVector::from_fn(n, |_, _| 2.0 * lcg(&mut s));
        let x = DMatrix::from_fn(n, 1, |_, _| 1.0 + lcg(&mut s));
        let w = DMatrix::from_fn(n, 1, |_, _| 3.0 * lcg(&mut s));
        let specs = uniform_specs(&BasisTemplate::cubic(6), 2, 0.0, 2.0).unwrap();
        // beta_0(z) = 1 + z^2, beta_1(z) = 2 - z, both cubic polynomials
        let y = DVector::from_fn(n, |i, _| 0.7 * w[(i, 0)] + 1.0 + z[i] * z[i] + x[(i, 0)] * (2.0 - z[i]));
        (Dataset::new(y, w, x, z, None).unwrap(), specs)
    }

    #[test]
    fn noiseless_recovery() {
        let (ds, specs) = noiseless(60);
        let f = fit(&ds, &specs, &FitOptions::default()).unwrap();
        assert!((f.gamma_hat[0] - 0.7).abs() < 1e-8);
        assert!((&f.fitted - ds.y()).norm() < 1e-8 * ds.y().norm());
        for i in 0..=20 {
            let z = 0.1 * i as f64;
            assert!((f.beta_at(0, z).unwrap() - (1.0 + z * z)).abs() < 1e-8);
            assert!((f.beta_at(1, z).unwrap() - (2.0 - z)).abs() < 1e-8);
        }
        // u = 0 gives a zero sandwich
        assert!(f.sigma_hat.norm() < 1e-12);
        assert!(homoskedastic_covariance(&f).unwrap().norm() < 1e-12);
    }

    #[test]
    fn constant_residual_factorization() {
        let mut s = 3;
        let wr = DMatrix::from_fn(40, 2, |_, _| lcg(&mut s) - 0.5);
        let c = 0.3;
        let u = DVector::from_element(40, c);
        let (phi, omega, sigma) = sandwich(&wr, &u).unwrap();
        assert!((&omega - &phi * (c * c)).norm() < 1e-14);
        let expect = spd_inverse(&phi).unwrap() * (c * c);
        assert!((sigma - &expect).norm() < 1e-12 * expect.norm());
        assert!((homoskedastic_from(&phi, c * c).unwrap() - expect).norm() < 1e-12);
    }

    #[test]
    fn scalar_homoskedastic() {
        let phi = DMatrix::from_element(1, 1, 2.0);
        let v = homoskedastic_from(&phi, 0.5).unwrap();
        assert!((v[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn collinear_linear_block() {
        let (ds, specs) = noiseless(50);
        // w equal to x (which lies in the span of x * p_1(z))
        let w = ds.x().columns(1, 1).into_owned();
        let x = ds.x().columns(1, 1).into_owned();
        let bad = Dataset::new(ds.y().clone(), w, x, ds.z().clone(), None).unwrap();
        match fit(&bad, &specs, &FitOptions::default()) {
            Err(PlvcError::Collinear { columns }) => assert_eq!(columns, vec!["w1".to_string()]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn constant_variance_model_cancels() {
        let (ds, specs) = noiseless(50);
        let mut s = 11;
        let y = ds.y() + DVector::from_fn(ds.n(), |_, _| lcg(&mut s) - 0.5);
        let ds = ds.with_response(y).unwrap();
        let plain = fit(&ds, &specs, &FitOptions::default()).unwrap();
        let weighted = fit_weighted(&ds, &specs, &VarianceModel::constant(3.7), &FitOptions::default()).unwrap();
        assert!((plain.gamma_hat[0] - weighted.gamma_hat[0]).abs() < 1e-10 * plain.gamma_hat[0].abs());
    }

    #[test]
    fn variance_function_edge_cases() {
        let (ds, specs) = noiseless(50);
        let mut f = fit(&ds, &specs, &FitOptions::default()).unwrap();
        let spec = BasisSpec::bspline(0.0, 2.0, 5, 3).unwrap();
        // residuals of +-0.5 give u^2 = 0.25 everywhere
        f.residuals = DVector::from_fn(ds.n(), |i, _| if i % 2 == 0 { 0.5 } else { -0.5 });
        let vm = estimate_variance_function(&f, ds.z(), &spec).unwrap();
        for i in 0..=10 {
            assert!((vm.eval(0.2 * i as f64) - 0.25).abs() < 1e-12);
        }
        f.residuals = DVector::zeros(ds.n());
        let vm = estimate_variance_function(&f, ds.z(), &spec).unwrap();
        assert_eq!(vm.eval(1.0), VARIANCE_FLOOR);
        assert!(vm.eta_lo > 0.0);
    }

    #[test]
    fn variance_clamp_tracks_fitted_envelope() {
        let (ds, specs) = noiseless(200);
        let mut f = fit(&ds, &specs, &FitOptions::default()).unwrap();
        let spec = BasisSpec::bspline(0.0, 2.0, 5, 3).unwrap();
        // sd 0.5 + z with alternating signs; squares are smooth in z
        f.residuals = DVector::from_fn(ds.n(), |i, _| {
            let s = 0.5 + ds.z()[i];
            if i % 2 == 0 { s } else { -s }
        });
        let vm = estimate_variance_function(&f, ds.z(), &spec).unwrap();
        let mut truth: Vec<f64> = ds.z().iter().map(|z| (0.5 + z).powi(2)).collect();
        truth.sort_by(f64::total_cmp);
        assert!((vm.eta_lo - quantile(&truth, 0.05)).abs() < 1e-10);
        assert!((vm.eta_hi - quantile(&truth, 0.95)).abs() < 1e-10);
    }
}
