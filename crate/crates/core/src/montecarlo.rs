//! Simulation designs and replication studies.
//!
//! Replication `r` draws from its own ChaCha20 stream (`seed`, stream `r`),
//! so any parallel schedule reproduces the same per-replication records.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisTemplate;
use crate::design::{uniform_specs, Dataset, InterceptMode};
use crate::error::{PlvcError, Result};
use crate::estimator::{estimate_variance_function, fit, fit_weighted, homoskedastic_covariance, FitOptions, FitResult};
use crate::kernel_profile::{profile_gamma, select_bandwidth, Kernel, KernelSpec, LocalOrder};
use crate::selection::{select_basis_weighted, select_basis, template_grid};

/// Fraction of failed replications above which a report is flagged invalid.
pub const MAX_FAILURE_RATE: f64 = 0.02;

/// Coefficient curve of `x` in both designs.
pub fn beta1_true(z: f64) -> f64 {
    let t = 24.0 * z;
    1.0 + t * t * t * (-t).exp()
}

/// Coefficient curve of the second varying regressor in the two-regressor design.
pub fn beta2_true(z: f64) -> f64 {
    z + z.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// `y = 1 + 0.5 w + x beta1(z) + u`.
    Dgp1,
    /// `y = 4 + 0.5 w + x1 beta1(z) + x2 beta2(z) + u`.
    Dgp2,
    /// Dgp1 with `u = sd * (1 + z) N(0,1) / sqrt(13/3)`: same average
    /// variance, heteroskedastic in z.
    CustomHetero,
    /// Dgp1 with the coefficient of `w` varying as `0.5 + z`; a pure varying
    /// coefficient truth used for power studies.
    VaryingGamma,
}

impl Dgp {
    pub fn name(self) -> &'static str {
        match self {
            Dgp::Dgp1 => "dgp1",
            Dgp::Dgp2 => "dgp2",
            Dgp::CustomHetero => "custom_hetero",
            Dgp::VaryingGamma => "varying_gamma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub dgp: Dgp,
    pub n: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_intercept")]
    pub intercept: InterceptMode,
}

fn default_intercept() -> InterceptMode {
    InterceptMode::Constant
}

fn default_noise_sd() -> f64 {
    0.5
}

impl DgpSpec {
    pub fn new(dgp: Dgp, n: usize) -> Self {
        Self {
            dgp,
            n,
            noise_sd: default_noise_sd(),
            intercept: default_intercept(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(PlvcError::Config(format!("simulation needs n >= 20, got {}", self.n)));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(PlvcError::Config("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Known parameters of a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub dgp: Dgp,
    pub intercept: InterceptMode,
    /// Coefficient of `w`, followed by the intercept when it is constant.
    pub gamma: Vec<f64>,
}

impl Truth {
    fn new(dgp: Dgp, intercept: InterceptMode) -> Self {
        let mut gamma = vec![0.5];
        if intercept == InterceptMode::Constant {
            gamma.push(if dgp == Dgp::Dgp2 { 4.0 } else { 1.0 });
        }
        Self { dgp, intercept, gamma }
    }

    /// True coefficient function of varying block `l`, counted as in the
    /// simulated dataset (block 0 is the intercept only when it varies).
    pub fn beta(&self, l: usize, z: f64) -> f64 {
        let l = match self.intercept {
            InterceptMode::Varying => l,
            InterceptMode::Constant => l + 1,
        };
        match (self.dgp, l) {
            (Dgp::Dgp2, 0) => 4.0,
            (_, 0) => 1.0,
            (_, 1) => beta1_true(z),
            (Dgp::Dgp2, 2) => beta2_true(z),
            _ => f64::NAN,
        }
    }
}

/// Stream `stream` of the ChaCha20 generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn u02<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..2.0)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn single_regressor<R: Rng + ?Sized>(
    n: usize,
    noise_sd: f64,
    dgp: Dgp,
    intercept: InterceptMode,
    rng: &mut R,
) -> (Dataset, Truth) {
    let mut y = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, 1);
    let mut x = DMatrix::zeros(n, 1);
    let mut z = DVector::zeros(n);
    let hetero_norm = (13.0_f64 / 3.0).sqrt();
    for i in 0..n {
        let (v1, v2, v3) = (u02(rng), u02(rng), u02(rng));
        let zi = u02(rng);
        let e = normal(rng);
        let wi = v1 + 2.0 * v3;
        let xi = v2 + v3;
        let u = match dgp {
            Dgp::CustomHetero => noise_sd * (1.0 + zi) * e / hetero_norm,
            _ => noise_sd * e,
        };
        let gamma = match dgp {
            Dgp::VaryingGamma => 0.5 + zi,
            _ => 0.5,
        };
        y[i] = 1.0 + gamma * wi + xi * beta1_true(zi) + u;
        w[(i, 0)] = wi;
        x[(i, 0)] = xi;
        z[i] = zi;
    }
    let ds = Dataset::with_intercept(y, w, x, z, None, intercept).expect("simulated data is finite");
    (ds, Truth::new(dgp, intercept))
}

pub fn gen_dgp1<R: Rng + ?Sized>(n: usize, noise_sd: f64, intercept: InterceptMode, rng: &mut R) -> (Dataset, Truth) {
    single_regressor(n, noise_sd, Dgp::Dgp1, intercept, rng)
}

pub fn gen_dgp2<R: Rng + ?Sized>(n: usize, noise_sd: f64, intercept: InterceptMode, rng: &mut R) -> (Dataset, Truth) {
    let mut y = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, 1);
    let mut x = DMatrix::zeros(n, 2);
    let mut z = DVector::zeros(n);
    for i in 0..n {
        let (v1, v2, v3, v4) = (u02(rng), u02(rng), u02(rng), u02(rng));
        let zi = u02(rng);
        let u = noise_sd * normal(rng);
        let wi = v1 + 2.0 * v3;
        let x1 = v2 + v3;
        let x2 = v4 + 0.5 * v3;
        y[i] = 4.0 + 0.5 * wi + x1 * beta1_true(zi) + x2 * beta2_true(zi) + u;
        w[(i, 0)] = wi;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        z[i] = zi;
    }
    let ds = Dataset::with_intercept(y, w, x, z, None, intercept).expect("simulated data is finite");
    (ds, Truth::new(Dgp::Dgp2, intercept))
}

pub fn generate<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> (Dataset, Truth) {
    match spec.dgp {
        Dgp::Dgp1 => gen_dgp1(spec.n, spec.noise_sd, spec.intercept, rng),
        Dgp::Dgp2 => gen_dgp2(spec.n, spec.noise_sd, spec.intercept, rng),
        other => single_regressor(spec.n, spec.noise_sd, other, spec.intercept, rng),
    }
}

/// Componentwise mean squared deviation from the truth.
pub fn mse_gamma(estimates: &[Vec<f64>], truth: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; truth.len()];
    if estimates.is_empty() {
        return out;
    }
    for e in estimates {
        for (j, t) in truth.iter().enumerate() {
            out[j] += (e[j] - t).powi(2);
        }
    }
    let r = estimates.len() as f64;
    out.iter_mut().for_each(|v| *v /= r);
    out
}

/// Average squared error of one curve at its own sample points.
pub fn average_squared_error(estimates: &[f64], z: &[f64], truth: impl Fn(f64) -> f64) -> f64 {
    let n = estimates.len() as f64;
    estimates
        .iter()
        .zip(z)
        .map(|(e, &zi)| (e - truth(zi)).powi(2))
        .sum::<f64>()
        / n
}

/// Mean over replications of the per-replication average squared error.
/// Each entry pairs the curve estimates with that replication's index values.
pub fn mase_beta(curves: &[(Vec<f64>, Vec<f64>)], truth: impl Fn(f64) -> f64) -> f64 {
    if curves.is_empty() {
        return 0.0;
    }
    curves
        .iter()
        .map(|(est, z)| average_squared_error(est, z, &truth))
        .sum::<f64>()
        / curves.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Series estimator; several templates means leave-one-out CV over them.
    Spline { templates: Vec<BasisTemplate> },
    /// Feasible weighted series estimator: CV-selected unweighted fit,
    /// variance curve on `variance_basis`, then the weighted refit.
    WeightedSpline {
        templates: Vec<BasisTemplate>,
        variance_basis: BasisTemplate,
    },
    /// Kernel profile estimator; several bandwidths means CV over them.
    Kernel {
        kernel: Kernel,
        order: LocalOrder,
        bandwidths: Vec<f64>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Spline { .. } => "spline",
            MethodSpec::WeightedSpline { .. } => "weighted_spline",
            MethodSpec::Kernel { .. } => "kernel",
        }
    }

    /// Default CV grid: cubic B-splines with per-block dimension 4..=16.
    pub fn default_spline() -> Self {
        MethodSpec::Spline {
            templates: (4..=16).map(BasisTemplate::cubic).collect(),
        }
    }

    pub fn default_kernel() -> Self {
        MethodSpec::Kernel {
            kernel: Kernel::Gaussian,
            order: LocalOrder::Linear,
            bandwidths: crate::kernel_profile::log_grid(0.02, 0.40, 15),
        }
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub method: usize,
    pub gamma_hat: Vec<f64>,
    /// Average squared error of every varying coefficient (block 0 is the intercept).
    pub ase: Vec<f64>,
    /// Standard errors sqrt(Sigma_jj / n) where available.
    pub se: Vec<f64>,
    /// ||Sigma - sigma2 Phi^-1||_F / ||Sigma||_F for series fits.
    pub efficiency_gap: Option<f64>,
    pub selected: Option<String>,
    pub selected_k_per_block: Option<usize>,
    pub selected_k_total: Option<usize>,
    pub selected_h: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub spec: MethodSpec,
    pub completed: usize,
    pub failures: usize,
    pub valid: bool,
    pub mse_gamma: Vec<f64>,
    /// Per varying block of the simulated dataset.
    pub mase_beta: Vec<f64>,
    /// Histogram of the selected configuration labels.
    pub selections: BTreeMap<String, usize>,
    pub mean_selected_k_total: Option<f64>,
    pub modal_selected_k_total: Option<usize>,
    pub mean_selected_h: Option<f64>,
    pub modal_selected_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub dgp: DgpSpec,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<RepRecord>,
    pub wall_clock_secs: f64,
}

impl SimReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn records_for(&self, method: usize) -> impl Iterator<Item = &RepRecord> {
        self.records.iter().filter(move |r| r.method == method && r.error.is_none())
    }
}

fn spline_fit(ds: &Dataset, templates: &[BasisTemplate], opts: &FitOptions) -> Result<(FitResult, BasisTemplate)> {
    let template = if templates.len() == 1 {
        templates[0]
    } else {
        let grid = template_grid(ds, templates)?;
        let report = select_basis(ds, &grid, opts.domain)?;
        templates[report.selected]
    };
    let (lo, hi) = ds.z_range();
    let specs = uniform_specs(&template, ds.d(), lo, hi)?;
    Ok((fit(ds, &specs, opts)?, template))
}

fn series_record(rep: u64, method: usize, ds: &Dataset, truth: &Truth, f: &FitResult, template: &BasisTemplate) -> Result<RepRecord> {
    let z: Vec<f64> = ds.z().iter().copied().collect();
    let mut ase = Vec::with_capacity(ds.d());
    for l in 0..ds.d() {
        let est: Vec<f64> = z.iter().map(|&zi| f.beta_at(l, zi)).collect::<Result<_>>()?;
        ase.push(average_squared_error(&est, &z, |v| truth.beta(l, v)));
    }
    let homo = homoskedastic_covariance(f)?;
    let denom = f.sigma_hat.norm();
    Ok(RepRecord {
        rep,
        method,
        gamma_hat: f.gamma_hat.iter().copied().collect(),
        ase,
        se: f.standard_errors(),
        efficiency_gap: (denom > 0.0).then(|| (&f.sigma_hat - homo).norm() / denom),
        selected: Some(template.label()),
        selected_k_per_block: Some(template.dimension()),
        selected_k_total: Some(template.dimension() * ds.d()),
        selected_h: None,
        error: None,
    })
}

fn run_method(rep: u64, idx: usize, method: &MethodSpec, ds: &Dataset, truth: &Truth) -> Result<RepRecord> {
    let opts = FitOptions::default();
    match method {
        MethodSpec::Spline { templates } => {
            let (f, t) = spline_fit(ds, templates, &opts)?;
            series_record(rep, idx, ds, truth, &f, &t)
        }
        MethodSpec::WeightedSpline { templates, variance_basis } => {
            let (f, t) = spline_fit(ds, templates, &opts)?;
            let (lo, hi) = ds.z_range();
            let vspec = variance_basis.resolve(lo, hi)?;
            let vm = estimate_variance_function(&f, ds.z(), &vspec)?;
            let t = if templates.len() > 1 {
                let grid = template_grid(ds, templates)?;
                templates[select_basis_weighted(ds, &grid, opts.domain, &vm)?.selected]
            } else {
                t
            };
            let specs = uniform_specs(&t, ds.d(), lo, hi)?;
            let wf = fit_weighted(ds, &specs, &vm, &opts)?;
            series_record(rep, idx, ds, truth, &wf, &t)
        }
        MethodSpec::Kernel { kernel, order, bandwidths } => {
            if bandwidths.is_empty() {
                return Err(PlvcError::Config("empty bandwidth grid".into()));
            }
            let template = KernelSpec::new(*kernel, bandwidths[0], *order)?;
            let h = if bandwidths.len() == 1 {
                bandwidths[0]
            } else {
                let rep = select_bandwidth(ds, bandwidths, &template)?;
                bandwidths[rep.selected]
            };
            let ks = template.with_bandwidth(h)?;
            let pf = profile_gamma(ds, &ks)?;
            let z: Vec<f64> = ds.z().iter().copied().collect();
            let ase = (0..ds.d())
                .map(|l| {
                    let est: Vec<f64> = pf.beta_at_sample.column(l).iter().copied().collect();
                    average_squared_error(&est, &z, |v| truth.beta(l, v))
                })
                .collect();
            Ok(RepRecord {
                rep,
                method: idx,
                gamma_hat: pf.gamma.iter().copied().collect(),
                ase,
                se: vec![],
                efficiency_gap: None,
                selected: Some(format!("h={h}")),
                selected_k_per_block: None,
                selected_k_total: None,
                selected_h: Some(h),
                error: None,
            })
        }
    }
}

fn mode_of<T: Copy + PartialEq + PartialOrd>(values: &[T]) -> Option<T> {
    let mut best: Option<(T, usize)> = None;
    for &v in values {
        let c = values.iter().filter(|&&u| u == v).count();
        // ties resolved towards the smaller value
        match best {
            Some((b, bc)) if bc > c || (bc == c && b <= v) => {}
            _ => best = Some((v, c)),
        }
    }
    best.map(|(v, _)| v)
}

pub fn summarize(method: usize, spec: &MethodSpec, records: &[RepRecord], truth_gamma: &[f64], reps: usize) -> MethodSummary {
    let ok: Vec<&RepRecord> = records
        .iter()
        .filter(|r| r.method == method && r.error.is_none())
        .collect();
    let failures = records.iter().filter(|r| r.method == method && r.error.is_some()).count();
    let estimates: Vec<Vec<f64>> = ok.iter().map(|r| r.gamma_hat.clone()).collect();
    let d = ok.first().map(|r| r.ase.len()).unwrap_or(0);
    let mase_beta = (0..d)
        .map(|l| ok.iter().map(|r| r.ase[l]).sum::<f64>() / ok.len() as f64)
        .collect();
    let mut selections = BTreeMap::new();
    for r in &ok {
        if let Some(s) = &r.selected {
            *selections.entry(s.clone()).or_insert(0) += 1;
        }
    }
    let ks: Vec<usize> = ok.iter().filter_map(|r| r.selected_k_total).collect();
    let hs: Vec<f64> = ok.iter().filter_map(|r| r.selected_h).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    MethodSummary {
        method: spec.name().to_string(),
        spec: spec.clone(),
        completed: ok.len(),
        failures,
        valid: (failures as f64) <= MAX_FAILURE_RATE * reps as f64,
        mse_gamma: mse_gamma(&estimates, truth_gamma),
        mase_beta,
        selections,
        mean_selected_k_total: mean(&ks.iter().map(|&k| k as f64).collect::<Vec<_>>()),
        modal_selected_k_total: mode_of(&ks),
        mean_selected_h: mean(&hs),
        modal_selected_h: mode_of(&hs),
    }
}

/// Runs `reps` replications of every method on fresh samples from `spec`.
pub fn run_sim(spec: &DgpSpec, methods: &[MethodSpec], reps: usize, seed: u64) -> Result<SimReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(PlvcError::Config("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(PlvcError::Config("no methods requested".into()));
    }
    let start = Instant::now();
    let per_rep: Vec<Vec<RepRecord>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let (ds, truth) = generate(spec, &mut rng);
            methods
                .iter()
                .enumerate()
                .map(|(idx, m)| {
                    run_method(rep, idx, m, &ds, &truth).unwrap_or_else(|e| RepRecord {
                        rep,
                        method: idx,
                        gamma_hat: vec![],
                        ase: vec![],
                        se: vec![],
                        efficiency_gap: None,
                        selected: None,
                        selected_k_per_block: None,
                        selected_k_total: None,
                        selected_h: None,
                        error: Some(e.to_string()),
                    })
                })
                .collect()
        })
        .collect();
    let records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
    let truth_gamma = Truth::new(spec.dgp, spec.intercept).gamma;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(i, m)| summarize(i, m, &records, &truth_gamma, reps))
        .collect();
    Ok(SimReport {
        dgp: *spec,
        reps,
        seed,
        methods: summaries,
        records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
