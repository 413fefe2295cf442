//! Command-line front end: configuration, data ingestion and report files.
//!
//! Every command reads an optional TOML configuration (see [`RunConfig`]),
//! applies the command-line overrides, and writes its outputs to one
//! directory. Failures produce an `error.json` record and a nonzero exit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisTemplate, DomainMode};
use crate::design::{uniform_specs, validate_dataset, ColumnRoles, Dataset, RawTable};
use crate::error::{PlvcError, Result};
use crate::estimator::{estimate_variance_function, fit, fit_weighted, FitOptions};
use crate::kernel_profile::{log_grid, profile_gamma, select_bandwidth, Kernel, KernelSpec, LocalOrder};
use crate::montecarlo::{run_sim, Dgp, DgpSpec, MethodSpec, SimReport};
use crate::selection::{curve_rows, select_basis, template_grid, CvReport};
use crate::testing::{wild_bootstrap_test, ModelClass, Multiplier, TestOptions, TestResult};
use crate::InterceptMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    Spline,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Bspline,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    ParametricLinear,
    Plvc,
    FullVc,
}

/// Estimation settings shared by `fit`, `cv` and `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: FitMethod,
    pub family: Family,
    /// Spline degree (2 or 3).
    pub degree: usize,
    /// Candidate basis dimensions per coefficient block; one entry fixes it.
    pub dimensions: Vec<usize>,
    pub kernel: Kernel,
    pub order: LocalOrder,
    /// Candidate bandwidths; one entry fixes it.
    pub bandwidths: Vec<f64>,
    pub dof_correction: bool,
    /// Feasible weighted refit using an estimated variance curve.
    pub weighted: bool,
    /// Cubic B-spline dimension of the variance curve.
    pub variance_dimension: usize,
    /// Points of the evenly spaced grid in `beta_curves.csv`.
    pub grid_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::Spline,
            family: Family::Bspline,
            degree: 3,
            dimensions: (4..=16).collect(),
            kernel: Kernel::Gaussian,
            order: LocalOrder::Linear,
            bandwidths: log_grid(0.02, 0.40, 15),
            dof_correction: true,
            weighted: false,
            variance_dimension: 5,
            grid_points: 201,
        }
    }
}

impl FitConfig {
    pub fn templates(&self) -> Vec<BasisTemplate> {
        self.dimensions
            .iter()
            .map(|&k| match self.family {
                Family::Bspline => BasisTemplate::BSpline {
                    degree: self.degree,
                    dimension: k,
                },
                Family::Power => BasisTemplate::Power {
                    degree: k.saturating_sub(1),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub null: ClassKind,
    pub alt: ClassKind,
    pub bootstrap: usize,
    pub multiplier: Multiplier,
    /// Re-run CV inside every bootstrap replicate.
    pub reselect: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            null: ClassKind::Plvc,
            alt: ClassKind::FullVc,
            bootstrap: 199,
            multiplier: Multiplier::Mammen,
            reselect: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgps: Vec<Dgp>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub noise_sd: f64,
    pub intercept: InterceptMode,
    pub methods: Vec<MethodSpec>,
    /// Keep per-replication records in `sim.json`.
    pub records: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            dgps: vec![Dgp::Dgp1],
            sizes: vec![100, 200],
            reps: 200,
            noise_sd: 0.5,
            intercept: InterceptMode::Constant,
            methods: vec![MethodSpec::default_spline(), MethodSpec::default_kernel()],
            records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisDumpConfig {
    pub family: Family,
    pub degree: usize,
    pub dimension: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for BasisDumpConfig {
    fn default() -> Self {
        Self {
            family: Family::Bspline,
            degree: 3,
            dimension: 8,
            lo: 0.0,
            hi: 2.0,
            points: 201,
        }
    }
}

/// The full run configuration. Every field has a default; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    /// Reject index values outside the basis range instead of clamping.
    pub strict: bool,
    pub threads: Option<usize>,
    pub data: Option<ColumnRoles>,
    pub fit: FitConfig,
    pub test: TestConfig,
    pub simulate: SimulateConfig,
    pub basis_dump: BasisDumpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            strict: false,
            threads: None,
            data: None,
            fit: FitConfig::default(),
            test: TestConfig::default(),
            simulate: SimulateConfig::default(),
            basis_dump: BasisDumpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PlvcError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(PlvcError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn domain(&self) -> DomainMode {
        if self.strict {
            DomainMode::Strict
        } else {
            DomainMode::Clamp
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            dof_correction: self.fit.dof_correction,
            domain: self.domain(),
            ..FitOptions::default()
        }
    }

    fn roles(&self) -> Result<&ColumnRoles> {
        self.data
            .as_ref()
            .ok_or_else(|| PlvcError::Config("missing [data] column roles".into()))
    }

    /// Hex SHA-256 of the effective configuration as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub library_version: String,
}

impl Provenance {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: cfg.hash(),
            seed: cfg.seed.unwrap_or_default(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| PlvcError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| PlvcError::Ingestion { row: Some(0), column: None, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PlvcError::Ingestion {
            row: Some(i + 1),
            column: None,
            message: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { headers, rows })
}

pub fn load_dataset(cfg: &RunConfig, data: &Path) -> Result<Dataset> {
    validate_dataset(&read_table(data)?, cfg.roles()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PlvcError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PlvcError::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| PlvcError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| PlvcError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub t_statistic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub method: FitMethod,
    pub weighted: bool,
    pub n: usize,
    pub selected: String,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub rss: f64,
    pub sigma2: Option<f64>,
    pub varying: Vec<String>,
    pub index_range: (f64, f64),
}

/// `beta_hat(z)` for every varying block on a grid, as returned by a fitted
/// model.
type CurveFn<'a> = Box<dyn Fn(usize, f64) -> Result<f64> + 'a>;

fn select_template(ds: &Dataset, cfg: &RunConfig) -> Result<(BasisTemplate, Option<CvReport>)> {
    let templates = cfg.fit.templates();
    match templates.len() {
        0 => Err(PlvcError::Config("fit.dimensions is empty".into())),
        1 => Ok((templates[0], None)),
        _ => {
            let report = select_basis(ds, &template_grid(ds, &templates)?, cfg.domain())?;
            Ok((templates[report.selected], Some(report)))
        }
    }
}

fn select_h(ds: &Dataset, cfg: &RunConfig) -> Result<(KernelSpec, Option<CvReport>)> {
    let hs = &cfg.fit.bandwidths;
    if hs.is_empty() {
        return Err(PlvcError::Config("fit.bandwidths is empty".into()));
    }
    let template = KernelSpec::new(cfg.fit.kernel, hs[0], cfg.fit.order)?;
    if hs.len() == 1 {
        return Ok((template, None));
    }
    let report = select_bandwidth(ds, hs, &template)?;
    Ok((template.with_bandwidth(hs[report.selected])?, Some(report)))
}

fn curve_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Fits the model and writes `fit.json` and `beta_curves.csv`.
pub fn cmd_fit(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(cfg, data)?;
    let (lo, hi) = ds.z_range();
    let labels = ds.labels().clone();
    let tss = {
        let mean = ds.y().mean();
        ds.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };

    let (report, curves): (FitReport, CurveFn) = match cfg.fit.method {
        FitMethod::Spline => {
            let (template, _) = select_template(&ds, cfg)?;
            let specs = uniform_specs(&template, ds.d(), lo, hi)?;
            let opts = cfg.fit_options();
            let mut f = fit(&ds, &specs, &opts)?;
            if cfg.fit.weighted {
                let vspec = BasisTemplate::cubic(cfg.fit.variance_dimension).resolve(lo, hi)?;
                let vm = estimate_variance_function(&f, ds.z(), &vspec)?;
                f = fit_weighted(&ds, &specs, &vm, &opts)?;
            }
            let se = f.standard_errors();
            let t = f.t_statistics();
            let coefficients = labels
                .linear
                .iter()
                .enumerate()
                .map(|(j, name)| Coefficient {
                    name: name.clone(),
                    estimate: f.gamma_hat[j],
                    std_error: Some(se[j]),
                    t_statistic: Some(t[j]),
                })
                .collect();
            let rss = f.residuals.norm_squared();
            let report = FitReport {
                provenance: Provenance::new("fit", cfg),
                method: FitMethod::Spline,
                weighted: cfg.fit.weighted,
                n: ds.n(),
                selected: template.label(),
                coefficients,
                r_squared: 1.0 - rss / tss,
                rss,
                sigma2: Some(f.sigma2_hat),
                varying: labels.varying.clone(),
                index_range: (lo, hi),
            };
            (report, Box::new(move |l, z| f.beta_at(l, z)))
        }
        FitMethod::Kernel => {
            if cfg.fit.weighted {
                return Err(PlvcError::Config("weighted fits need the spline method".into()));
            }
            let (ks, _) = select_h(&ds, cfg)?;
            let pf = profile_gamma(&ds, &ks)?;
            let coefficients = labels
                .linear
                .iter()
                .enumerate()
                .map(|(j, name)| Coefficient {
                    name: name.clone(),
                    estimate: pf.gamma[j],
                    std_error: None,
                    t_statistic: None,
                })
                .collect();
            let report = FitReport {
                provenance: Provenance::new("fit", cfg),
                method: FitMethod::Kernel,
                weighted: false,
                n: ds.n(),
                selected: format!("h={}", ks.bandwidth),
                coefficients,
                r_squared: 1.0 - pf.rss / tss,
                rss: pf.rss,
                sigma2: None,
                varying: labels.varying.clone(),
                index_range: (lo, hi),
            };
            (report, Box::new(move |l, z| pf.beta_at(l, z)))
        }
    };

    fs::create_dir_all(out)?;
    let fit_path = out.join("fit.json");
    write_json(&fit_path, &report)?;

    let mut header = vec![labels.index.clone()];
    header.extend(labels.varying.iter().cloned());
    let rows = curve_grid(lo, hi, cfg.fit.grid_points)
        .into_iter()
        .map(|z| {
            let mut row = vec![fmt_f64(z)];
            for l in 0..ds.d() {
                row.push(fmt_f64(curves(l, z)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let curve_path = out.join("beta_curves.csv");
    write_csv(&curve_path, &header, &rows)?;
    Ok(vec![fit_path, curve_path])
}

/// Writes the leave-one-out CV curve over the configured grid.
pub fn cmd_cv(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(cfg, data)?;
    let report = match cfg.fit.method {
        FitMethod::Spline => {
            let templates = cfg.fit.templates();
            select_basis(&ds, &template_grid(&ds, &templates)?, cfg.domain())?
        }
        FitMethod::Kernel => {
            let ks = KernelSpec::new(cfg.fit.kernel, 1.0, cfg.fit.order)?;
            select_bandwidth(&ds, &cfg.fit.bandwidths, &ks)?
        }
    };
    let header: Vec<String> = ["candidate", "total_k", "bandwidth", "cv_score", "in_sample_rss", "selected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = curve_rows(&report)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                r.candidate,
                r.total_k.to_string(),
                opt_f64(r.bandwidth),
                opt_f64(r.cv_score),
                opt_f64(r.in_sample_rss),
                (i == report.selected).to_string(),
            ]
        })
        .collect();
    fs::create_dir_all(out)?;
    let path = out.join("cv_curve.csv");
    write_csv(&path, &header, &rows)?;
    Ok(vec![path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub result: TestResult,
}

fn class_of(kind: ClassKind, template: BasisTemplate) -> ModelClass {
    match kind {
        ClassKind::ParametricLinear => ModelClass::ParametricLinear,
        ClassKind::Plvc => ModelClass::Plvc { template },
        ClassKind::FullVc => ModelClass::FullVc { template },
    }
}

/// Runs the bootstrap specification test and writes `test.json`.
pub fn cmd_test(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let tc = &cfg.test;
    if tc.null == tc.alt {
        return Err(PlvcError::NotNested("null and alternative classes coincide".into()));
    }
    if tc.bootstrap < crate::testing::MIN_REPLICATES {
        return Err(PlvcError::Config(format!(
            "test.bootstrap must be at least {}",
            crate::testing::MIN_REPLICATES
        )));
    }
    let ds = load_dataset(cfg, data)?;
    let grid = cfg.fit.templates();
    if grid.is_empty() {
        return Err(PlvcError::Config("fit.dimensions is empty".into()));
    }
    // one template for both series classes keeps them nested
    let tuned = if tc.null == ClassKind::ParametricLinear { tc.alt } else { tc.null };
    let chosen = class_of(tuned, grid[0]).cv_select(&ds, &grid, cfg.domain())?;
    let template = *chosen.template().expect("series class");
    let null = class_of(tc.null, template);
    let alt = class_of(tc.alt, template);
    let opts = TestOptions {
        multiplier: tc.multiplier,
        domain: cfg.domain(),
        reselect_grid: if tc.reselect { grid } else { vec![] },
    };
    let result = wild_bootstrap_test(&ds, &null, &alt, tc.bootstrap, cfg.seed.unwrap_or_default(), &opts)?;
    fs::create_dir_all(out)?;
    let path = out.join("test.json");
    write_json(
        &path,
        &TestReport {
            provenance: Provenance::new("test", cfg),
            result,
        },
    )?;
    Ok(vec![path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub provenance: Provenance,
    pub reports: Vec<SimReport>,
}

/// Rows `(dgp, method, n, metric, value)` of the simulation tables.
pub fn table_rows(reports: &[SimReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        for m in &r.methods {
            let mut push = |metric: String, value: f64| {
                rows.push(vec![
                    r.dgp.dgp.name().to_string(),
                    m.method.clone(),
                    r.dgp.n.to_string(),
                    metric,
                    fmt_f64(value),
                ]);
            };
            push("mse_gamma".into(), m.mse_gamma.first().copied().unwrap_or(f64::NAN));
            let offset = usize::from(r.dgp.intercept == InterceptMode::Varying);
            for (l, v) in m.mase_beta.iter().enumerate().skip(offset) {
                push(format!("mase_beta_{}", l + 1 - offset), *v);
            }
        }
    }
    rows
}

/// Runs every configured design and sample size; writes `sim.json` and
/// `tables.csv`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sc = &cfg.simulate;
    let seed = cfg.seed.unwrap_or_default();
    let mut reports = Vec::new();
    for &dgp in &sc.dgps {
        for &n in &sc.sizes {
            let spec = DgpSpec {
                dgp,
                n,
                noise_sd: sc.noise_sd,
                intercept: sc.intercept,
            };
            let mut rep = run_sim(&spec, &sc.methods, sc.reps, seed)?;
            if !sc.records {
                rep.records.clear();
            }
            reports.push(rep);
        }
    }
    fs::create_dir_all(out)?;
    let rows = table_rows(&reports);
    let sim_path = out.join("sim.json");
    write_json(
        &sim_path,
        &SimOutput {
            provenance: Provenance::new("simulate", cfg),
            reports,
        },
    )?;
    let header: Vec<String> = ["dgp", "method", "n", "metric", "value"].iter().map(|s| s.to_string()).collect();
    let table_path = out.join("tables.csv");
    write_csv(&table_path, &header, &rows)?;
    Ok(vec![sim_path, table_path])
}

/// Writes basis function values on an evenly spaced grid to `basis.csv`.
pub fn cmd_basis_dump(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let bd = &cfg.basis_dump;
    let template = match bd.family {
        Family::Bspline => BasisTemplate::BSpline {
            degree: bd.degree,
            dimension: bd.dimension,
        },
        Family::Power => BasisTemplate::Power { degree: bd.degree },
    };
    let spec = template.resolve(bd.lo, bd.hi)?;
    let k = spec.dimension();
    let mut header = vec!["z".to_string()];
    header.extend((0..k).map(|j| format!("b{j}")));
    let rows = curve_grid(bd.lo, bd.hi, bd.points)
        .into_iter()
        .map(|z| {
            let vals = spec.eval(z, cfg.domain())?;
            let mut row = vec![fmt_f64(z)];
            row.extend(vals.into_iter().map(fmt_f64));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let path = out.join("basis.csv");
    write_csv(&path, &header, &rows)?;
    Ok(vec![path])
}

#[derive(Debug, Parser)]
#[command(name = "plvc", version, about = "Partially linear varying coefficient models by series least squares")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reject index values outside the basis range.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit the model; writes fit.json and beta_curves.csv.
    Fit,
    /// Cross-validation curve; writes cv_curve.csv.
    Cv,
    /// Bootstrap specification test; writes test.json.
    Test,
    /// Monte Carlo study; writes sim.json and tables.csv.
    Simulate,
    /// Basis values on a grid; writes basis.csv.
    BasisDump,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Cv => "cv",
            Command::Test => "test",
            Command::Simulate => "simulate",
            Command::BasisDump => "basis-dump",
        }
    }
}

/// Loads the configuration and applies command-line overrides; an absent
/// seed is drawn at random (within the TOML integer range) so that it can
/// be recorded and replayed.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.strict |= cli.strict;
    if cfg.seed.is_none() {
        cfg.seed = Some(rand::rng().random_range(0..=i64::MAX as u64));
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli)?;
    if let Some(t) = cfg.threads {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let data = || {
        cli.data
            .as_deref()
            .ok_or_else(|| PlvcError::Config("--data is required for this command".into()))
    };
    match cli.command {
        Command::Fit => cmd_fit(&cfg, data()?, &cli.out),
        Command::Cv => cmd_cv(&cfg, data()?, &cli.out),
        Command::Test => cmd_test(&cfg, data()?, &cli.out),
        Command::Simulate => cmd_simulate(&cfg, &cli.out),
        Command::BasisDump => cmd_basis_dump(&cfg, &cli.out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: String,
    pub message: String,
}

/// Entry point of the binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            let mut stdout = std::io::stdout().lock();
            for p in paths {
                let _ = writeln!(stdout, "{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = ErrorRecord {
                command: cli.command.name().to_string(),
                kind: e.kind().to_string(),
                message: e.to_string(),
            };
            let json = serde_json::to_string(&record).expect("error record serializes");
            if fs::create_dir_all(&cli.out).is_ok() {
                let _ = fs::write(cli.out.join("error.json"), format!("{json}\n"));
            }
            eprintln!("{json}");
            ExitCode::FAILURE
        }
    }
}
