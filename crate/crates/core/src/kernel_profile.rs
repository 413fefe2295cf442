//! Kernel profile least-squares estimator, the comparison baseline.
//!
//! The projection of a variable on the varying-coefficient space is
//! estimated pointwise by kernel-weighted local regression on `x` around each
//! `z_i`. Residualizing `y` and `w` this way and running OLS gives the
//! constant coefficients; the coefficient curves come from the local fit of
//! `y - w'gamma`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Dataset;
use crate::error::{PlvcError, Result};
use crate::estimator::{VarianceModel, COLLINEARITY_TOL};
use crate::linalg::PivotedQr;
use crate::selection::{Candidate, CvReport};

/// Relative pivot tolerance for local designs.
pub const LOCAL_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Epanechnikov,
    #[default]
    Gaussian,
}

impl Kernel {
    pub fn weight(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalOrder {
    Constant,
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub order: LocalOrder,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, bandwidth: f64, order: LocalOrder) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(PlvcError::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self {
            kernel,
            bandwidth,
            order,
        })
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.kernel, bandwidth, self.order)
    }
}

/// Local coefficients of several targets at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    /// d x m level coefficients, one column per target.
    pub coefficients: DMatrix<f64>,
    /// True when the Epanechnikov window was degenerate and Gaussian weights
    /// were used instead.
    pub fell_back: bool,
}

fn local_solve(
    targets: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    z0: f64,
    kernel: Kernel,
    h: f64,
    order: LocalOrder,
    exclude: Option<usize>,
) -> Result<DMatrix<f64>> {
    let d = x.ncols();
    let m = targets.ncols();
    let cols = match order {
        LocalOrder::Constant => d,
        LocalOrder::Linear => 2 * d,
    };
    let rows: Vec<(usize, f64)> = (0..z.len())
        .filter(|&i| Some(i) != exclude)
        .filter_map(|i| {
            let k = kernel.weight((z[i] - z0) / h);
            (k > 0.0).then_some((i, k.sqrt()))
        })
        .collect();
    if rows.len() < cols {
        return Err(PlvcError::LocalRank { z0 });
    }
    let mut a = DMatrix::zeros(rows.len(), cols);
    let mut b = DMatrix::zeros(rows.len(), m);
    for (r, &(i, s)) in rows.iter().enumerate() {
        let dz = z[i] - z0;
        for l in 0..d {
            a[(r, l)] = s * x[(i, l)];
            if order == LocalOrder::Linear {
                a[(r, d + l)] = s * x[(i, l)] * dz / h;
            }
        }
        for j in 0..m {
            b[(r, j)] = s * targets[(i, j)];
        }
    }
    let qr = PivotedQr::new(&a, LOCAL_RANK_TOL);
    if qr.rank() < cols {
        return Err(PlvcError::LocalRank { z0 });
    }
    let mut out = DMatrix::zeros(d, m);
    for j in 0..m {
        let c = qr.solve(&b.column(j).into_owned());
        for l in 0..d {
            out[(l, j)] = c[l];
        }
    }
    Ok(out)
}

/// Kernel-weighted local least squares of each target column on `x` around
/// `z0`, optionally leaving one observation out. A degenerate Epanechnikov
/// window falls back to Gaussian weights with the same bandwidth.
pub fn local_fit(
    targets: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    z0: f64,
    ks: &KernelSpec,
    exclude: Option<usize>,
) -> Result<LocalFit> {
    match local_solve(targets, x, z, z0, ks.kernel, ks.bandwidth, ks.order, exclude) {
        Ok(coefficients) => Ok(LocalFit {
            coefficients,
            fell_back: false,
        }),
        Err(PlvcError::LocalRank { .. }) if ks.kernel == Kernel::Epanechnikov => {
            local_solve(targets, x, z, z0, Kernel::Gaussian, ks.bandwidth, ks.order, exclude).map(|coefficients| {
                LocalFit {
                    coefficients,
                    fell_back: true,
                }
            })
        }
        Err(e) => Err(e),
    }
}

/// Level coefficients `c(z0)` of a single target (no fallback).
pub fn local_vc_fit(
    target: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    z0: f64,
    ks: &KernelSpec,
) -> Result<Vec<f64>> {
    let t = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
    let c = local_solve(&t, x, z, z0, ks.kernel, ks.bandwidth, ks.order, None)?;
    Ok(c.column(0).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFit {
    pub gamma: DVector<f64>,
    pub spec: KernelSpec,
    /// `beta_hat(z_i)`, n x d.
    pub beta_at_sample: DMatrix<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// Number of local fits that used the Gaussian fallback.
    pub fallbacks: usize,
    partial: DVector<f64>,
    x: DMatrix<f64>,
    z: DVector<f64>,
}

impl ProfileFit {
    /// Coefficient curve `l` at an arbitrary point.
    pub fn beta_at(&self, l: usize, z0: f64) -> Result<f64> {
        if l >= self.x.ncols() {
            return Err(PlvcError::Dimension(format!("block {l} out of range")));
        }
        let t = DMatrix::from_column_slice(self.partial.len(), 1, self.partial.as_slice());
        let fit = local_fit(&t, &self.x, &self.z, z0, &self.spec, None)?;
        Ok(fit.coefficients[(l, 0)])
    }
}

fn targets_of(ds: &Dataset) -> DMatrix<f64> {
    let n = ds.n();
    let q = ds.q();
    let mut t = DMatrix::zeros(n, 1 + q);
    t.column_mut(0).copy_from(ds.y());
    t.view_mut((0, 1), (n, q)).copy_from(ds.w());
    t
}

struct Smoothed {
    // n x (1+q): projections of y and w at the sample points
    projected: DMatrix<f64>,
    // per observation, d x (1+q) local coefficients
    coefs: Vec<DMatrix<f64>>,
    fallbacks: usize,
}

fn smooth_at_sample(ds: &Dataset, ks: &KernelSpec, leave_out: bool) -> Result<Smoothed> {
    let targets = targets_of(ds);
    let fits: Vec<LocalFit> = (0..ds.n())
        .map(|i| local_fit(&targets, ds.x(), ds.z(), ds.z()[i], ks, leave_out.then_some(i)))
        .collect::<Result<_>>()?;
    let n = ds.n();
    let mut projected = DMatrix::zeros(n, targets.ncols());
    for (i, f) in fits.iter().enumerate() {
        let row = ds.x().row(i) * &f.coefficients;
        projected.row_mut(i).copy_from(&row);
    }
    Ok(Smoothed {
        projected,
        fallbacks: fits.iter().filter(|f| f.fell_back).count(),
        coefs: fits.into_iter().map(|f| f.coefficients).collect(),
    })
}

fn profile_from(ds: &Dataset, ks: &KernelSpec, sm: Smoothed, weights: Option<&DVector<f64>>) -> Result<ProfileFit> {
    let n = ds.n();
    let q = ds.q();
    let y_tilde = ds.y() - sm.projected.column(0);
    let w_tilde = ds.w() - sm.projected.columns(1, q);

    let gamma = if q == 0 {
        DVector::zeros(0)
    } else {
        let (mut a, mut b) = (w_tilde.clone(), y_tilde.clone());
        if let Some(s) = weights {
            for i in 0..n {
                b[i] /= s[i];
                for j in 0..q {
                    a[(i, j)] /= s[i];
                }
            }
        }
        let scale = (0..q).map(|j| ds.w().column(j).norm()).fold(0.0, f64::max);
        let qr = PivotedQr::with_threshold(&a, COLLINEARITY_TOL * scale);
        if qr.rank() < q {
            return Err(PlvcError::Collinear {
                columns: qr
                    .dependent_columns()
                    .into_iter()
                    .map(|j| ds.labels().linear[j].clone())
                    .collect(),
            });
        }
        qr.solve(&b)
    };

    // local fits are linear in the target, so the fit of y - w'gamma is
    // c_y - C_w gamma
    let mut combo = DVector::zeros(1 + q);
    combo[0] = 1.0;
    for j in 0..q {
        combo[1 + j] = -gamma[j];
    }
    let d = ds.d();
    let mut beta = DMatrix::zeros(n, d);
    for (i, c) in sm.coefs.iter().enumerate() {
        let b = c * &combo;
        for l in 0..d {
            beta[(i, l)] = b[l];
        }
    }
    let partial = ds.y() - ds.w() * &gamma;
    let fitted = DVector::from_fn(n, |i, _| {
        (ds.w().row(i) * &gamma)[0] + (ds.x().row(i) * beta.row(i).transpose())[0]
    });
    let residuals = ds.y() - &fitted;
    Ok(ProfileFit {
        gamma,
        spec: *ks,
        beta_at_sample: beta,
        rss: residuals.norm_squared(),
        fitted,
        residuals,
        fallbacks: sm.fallbacks,
        partial,
        x: ds.x().clone(),
        z: ds.z().clone(),
    })
}

/// Unweighted profile estimator.
pub fn profile_gamma(ds: &Dataset, ks: &KernelSpec) -> Result<ProfileFit> {
    let sm = smooth_at_sample(ds, ks, false)?;
    profile_from(ds, ks, sm, None)
}

/// Diagnostic variant: the residualized regression is reweighted by a
/// user-supplied variance curve. The projections themselves stay unweighted.
pub fn profile_gamma_weighted(ds: &Dataset, ks: &KernelSpec, vm: &VarianceModel) -> Result<ProfileFit> {
    let sm = smooth_at_sample(ds, ks, false)?;
    let s = DVector::from_fn(ds.n(), |i, _| vm.eval(ds.z()[i]).sqrt());
    profile_from(ds, ks, sm, Some(&s))
}

/// `(cv score, in-sample rss)` for one bandwidth. The constant coefficients
/// come from the full sample; each prediction of `y_i` uses local fits that
/// exclude observation i.
pub fn bandwidth_cv_parts(ds: &Dataset, ks: &KernelSpec) -> Result<(f64, f64)> {
    let full = profile_gamma(ds, ks)?;
    let loo = smooth_at_sample(ds, ks, true)?;
    let q = ds.q();
    let mut combo = DVector::zeros(1 + q);
    combo[0] = 1.0;
    for j in 0..q {
        combo[1 + j] = -full.gamma[j];
    }
    let mut score = 0.0;
    for i in 0..ds.n() {
        let beta = &loo.coefs[i] * &combo;
        let pred = (ds.w().row(i) * &full.gamma)[0] + (ds.x().row(i) * beta)[0];
        score += (ds.y()[i] - pred).powi(2);
    }
    Ok((score, full.rss))
}

pub fn select_bandwidth(ds: &Dataset, grid: &[f64], template: &KernelSpec) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(PlvcError::Selection("empty bandwidth grid".into()));
    }
    let outcomes: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|&h| template.with_bandwidth(h).and_then(|ks| bandwidth_cv_parts(ds, &ks)))
        .collect();
    let candidates = grid.iter().map(|&h| Candidate::from_bandwidth(h)).collect();
    CvReport::assemble(candidates, outcomes)
}

/// `count` log-spaced bandwidths from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn kernel_weights() {
        assert_eq!(Kernel::Epanechnikov.weight(1.2), 0.0);
        assert_eq!(Kernel::Epanechnikov.weight(-1.0), 0.0);
        assert!((Kernel::Epanechnikov.weight(0.0) - 0.75).abs() < 1e-15);
        assert!(Kernel::Gaussian.weight(3.0) > 0.0);
    }

    #[test]
    fn exact_local_model() {
        let mut s = 5;
        let n = 40;
        let z = DVector::from_fn(n, |_, _| rng(&mut s));
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng(&mut s) });
        let c0 = [1.5, -0.7];
        let t = DVector::from_fn(n, |i, _| c0[0] + c0[1] * x[(i, 1)]);
        for order in [LocalOrder::Constant, LocalOrder::Linear] {
            let ks = KernelSpec::new(Kernel::Epanechnikov, 0.4, order).unwrap();
            let c = local_vc_fit(&t, &x, &z, 0.5, &ks).unwrap();
            assert!((c[0] - c0[0]).abs() < 1e-10 && (c[1] - c0[1]).abs() < 1e-10);
        }
        let ones = DMatrix::from_element(n, 1, 1.0);
        let tc = DVector::from_element(n, 2.25);
        let ks = KernelSpec::new(Kernel::Gaussian, 0.1, LocalOrder::Constant).unwrap();
        let c = local_vc_fit(&tc, &ones, &z, 0.3, &ks).unwrap();
        assert!((c[0] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn empty_window_falls_back() {
        let n = 20;
        let z = DVector::from_fn(n, |i, _| i as f64 / 19.0);
        let x = DMatrix::from_element(n, 1, 1.0);
        let t = DMatrix::from_fn(n, 1, |i, _| z[i]);
        let ks = KernelSpec::new(Kernel::Epanechnikov, 0.01, LocalOrder::Linear).unwrap();
        assert!(matches!(
            local_vc_fit(&t.column(0).into_owned(), &x, &z, 0.52, &ks),
            Err(PlvcError::LocalRank { .. })
        ));
        let f = local_fit(&t, &x, &z, 0.52, &ks, None).unwrap();
        assert!(f.fell_back);
        assert!((f.coefficients[(0, 0)] - 0.52).abs() < 1e-8);
    }

    #[test]
    fn bandwidth_validation_and_grid() {
        assert!(KernelSpec::new(Kernel::Gaussian, 0.0, LocalOrder::Linear).is_err());
        let g = log_grid(0.02, 0.4, 15);
        assert_eq!(g.len(), 15);
        assert!((g[0] - 0.02).abs() < 1e-15 && (g[14] - 0.4).abs() < 1e-12);
    }
}
