//! Wild-bootstrap specification test between nested model classes.
//!
//! The statistic is `(RSS_0 - RSS) / RSS`, with `RSS_0` from the null class
//! and `RSS` from the alternative. Bootstrap responses are built from the
//! fitted null model plus null residuals scaled by two-point multipliers, so
//! the bootstrap distribution approximates the null distribution of the
//! statistic whichever class generated the data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisTemplate, DomainMode};
use crate::design::{build_design, uniform_specs, Dataset, InterceptMode};
use crate::error::{PlvcError, Result};
use crate::linalg::{PivotedQr, DEFAULT_RANK_TOL};
use crate::montecarlo::stream_rng;
use crate::selection::{select_basis, template_grid};

/// Smallest accepted number of bootstrap replicates.
pub const MIN_REPLICATES: usize = 99;

/// Largest tolerated share of dropped replicates.
pub const MAX_DROP_RATE: f64 = 0.05;

/// Relative slack in the check `RSS_0 >= RSS`.
pub const NESTING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ModelClass {
    /// `y = w'g + x'b + c z + u`: every coefficient constant. The `z` term
    /// is present only when the intercept sits in the varying block.
    ParametricLinear,
    /// `y = w'g + x'b(z) + u`.
    Plvc { template: BasisTemplate },
    /// `y = w'g(z) + x'b(z) + u`.
    FullVc { template: BasisTemplate },
}

impl ModelClass {
    pub fn name(&self) -> &'static str {
        match self {
            ModelClass::ParametricLinear => "parametric_linear",
            ModelClass::Plvc { .. } => "plvc",
            ModelClass::FullVc { .. } => "full_vc",
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelClass::ParametricLinear => self.name().to_string(),
            ModelClass::Plvc { template } | ModelClass::FullVc { template } => {
                format!("{}[{}]", self.name(), template.label())
            }
        }
    }

    fn rank_order(&self) -> u8 {
        match self {
            ModelClass::ParametricLinear => 0,
            ModelClass::Plvc { .. } => 1,
            ModelClass::FullVc { .. } => 2,
        }
    }

    pub fn template(&self) -> Option<&BasisTemplate> {
        match self {
            ModelClass::ParametricLinear => None,
            ModelClass::Plvc { template } | ModelClass::FullVc { template } => Some(template),
        }
    }

    fn with_template(&self, template: BasisTemplate) -> Self {
        match self {
            ModelClass::ParametricLinear => ModelClass::ParametricLinear,
            ModelClass::Plvc { .. } => ModelClass::Plvc { template },
            ModelClass::FullVc { .. } => ModelClass::FullVc { template },
        }
    }

    /// The regressor matrix whose least-squares fit realizes the class.
    pub fn regressors(&self, ds: &Dataset, mode: DomainMode) -> Result<DMatrix<f64>> {
        let n = ds.n();
        match self {
            ModelClass::ParametricLinear => {
                let (q, d) = (ds.q(), ds.d());
                let with_z = ds.intercept_mode() == InterceptMode::Varying;
                let mut r = DMatrix::zeros(n, q + d + usize::from(with_z));
                r.view_mut((0, 0), (n, q)).copy_from(ds.w());
                r.view_mut((0, q), (n, d)).copy_from(ds.x());
                if with_z {
                    r.column_mut(q + d).copy_from(ds.z());
                }
                Ok(r)
            }
            ModelClass::Plvc { template } => {
                let (lo, hi) = ds.z_range();
                let specs = uniform_specs(template, ds.d(), lo, hi)?;
                let p = build_design(ds, &specs, mode)?.p;
                let q = ds.q();
                let mut r = DMatrix::zeros(n, q + p.ncols());
                r.view_mut((0, 0), (n, q)).copy_from(ds.w());
                r.view_mut((0, q), (n, p.ncols())).copy_from(&p);
                Ok(r)
            }
            ModelClass::FullVc { template } => {
                let full = ds.absorb_linear();
                let (lo, hi) = full.z_range();
                let specs = uniform_specs(template, full.d(), lo, hi)?;
                Ok(build_design(&full, &specs, mode)?.p)
            }
        }
    }

    /// Picks the template of a series class by leave-one-out CV over `grid`.
    pub fn cv_select(&self, ds: &Dataset, grid: &[BasisTemplate], mode: DomainMode) -> Result<Self> {
        let target = match self {
            ModelClass::ParametricLinear => return Ok(self.clone()),
            ModelClass::Plvc { .. } => ds.clone(),
            ModelClass::FullVc { .. } => ds.absorb_linear(),
        };
        let report = select_basis(&target, &template_grid(&target, grid)?, mode)?;
        Ok(self.with_template(grid[report.selected].clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    /// Golden-ratio two-point law with mean 0, variance 1, third moment 1.
    #[default]
    Mammen,
    /// Equiprobable signs.
    Rademacher,
}

impl Multiplier {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Multiplier::Mammen => {
                let s5 = 5f64.sqrt();
                if rng.random::<f64>() < (5.0 + s5) / 10.0 {
                    (1.0 - s5) / 2.0
                } else {
                    (1.0 + s5) / 2.0
                }
            }
            Multiplier::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// `n` draws of the Mammen two-point law.
pub fn wild_multipliers<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| Multiplier::Mammen.draw(rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestOptions {
    pub multiplier: Multiplier,
    pub domain: DomainMode,
    /// Re-run CV on every bootstrap sample over this grid (empty: keep the
    /// templates chosen on the original data).
    pub reselect_grid: Vec<BasisTemplate>,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            multiplier: Multiplier::Mammen,
            domain: DomainMode::Clamp,
            reselect_grid: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub null: String,
    pub alt: String,
    pub statistic: f64,
    pub bootstrap_stats: Vec<f64>,
    pub p_value: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub rss0: f64,
    pub rss: f64,
    pub dropped: usize,
    pub multiplier: Multiplier,
}

pub fn rss_stat(rss0: f64, rss: f64) -> Result<f64> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(PlvcError::DegenerateFit(rss));
    }
    if rss0 < rss * (1.0 - NESTING_TOL) {
        return Err(PlvcError::NotNested(format!(
            "null rss {rss0} below alternative rss {rss}"
        )));
    }
    Ok((rss0 - rss) / rss)
}

/// `(1 + #{stat*_b >= stat}) / (B + 1)`, with `B` the number of kept replicates.
pub fn bootstrap_p_value(statistic: f64, boot: &[f64]) -> f64 {
    let exceed = boot.iter().filter(|&&s| s >= statistic).count();
    (1 + exceed) as f64 / (boot.len() + 1) as f64
}

struct PairFit {
    null: PivotedQr,
    alt: PivotedQr,
}

impl PairFit {
    fn new(ds: &Dataset, null: &ModelClass, alt: &ModelClass, mode: DomainMode) -> Result<Self> {
        let r0 = null.regressors(ds, mode)?;
        let r1 = alt.regressors(ds, mode)?;
        let null_qr = PivotedQr::new(&r0, DEFAULT_RANK_TOL);
        let alt_qr = PivotedQr::new(&r1, DEFAULT_RANK_TOL);
        if alt_qr.rank() >= ds.n() {
            return Err(PlvcError::NoDegreesOfFreedom {
                n: ds.n(),
                params: alt_qr.rank(),
            });
        }
        let leak = alt_qr.annihilate(&r0).norm();
        if leak > 1e-6 * r0.norm().max(1.0) {
            return Err(PlvcError::NotNested(format!(
                "{} is not spanned by {} (residual norm {leak:.3e})",
                null.label(),
                alt.label()
            )));
        }
        Ok(Self { null: null_qr, alt: alt_qr })
    }

    fn statistic(&self, y: &DVector<f64>) -> Result<(f64, f64, f64)> {
        let rss0 = self.null.residual_vec(y).norm_squared();
        let rss = self.alt.residual_vec(y).norm_squared();
        Ok((rss_stat(rss0, rss)?, rss0, rss))
    }
}

pub fn wild_bootstrap_test(
    ds: &Dataset,
    null: &ModelClass,
    alt: &ModelClass,
    b: usize,
    seed: u64,
    opts: &TestOptions,
) -> Result<TestResult> {
    if null.rank_order() >= alt.rank_order() {
        return Err(PlvcError::NotNested(format!(
            "{} must be a strict submodel of {}",
            null.name(),
            alt.name()
        )));
    }
    if b < MIN_REPLICATES {
        return Err(PlvcError::Config(format!(
            "at least {MIN_REPLICATES} bootstrap replicates required, got {b}"
        )));
    }
    let mode = opts.domain;
    let pair = PairFit::new(ds, null, alt, mode)?;
    let (statistic, rss0, rss) = pair.statistic(ds.y())?;
    let resid0 = pair.null.residual_vec(ds.y());
    let fitted0 = ds.y() - &resid0;

    let reselect = !opts.reselect_grid.is_empty();
    let outcomes: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let y_star = DVector::from_fn(ds.n(), |i, _| {
                fitted0[i] + resid0[i] * opts.multiplier.draw(&mut rng)
            });
            let stat = if reselect {
                let boot = ds.with_response(y_star.clone()).ok()?;
                let grid = &opts.reselect_grid;
                let n1 = null.cv_select(&boot, grid, mode).ok()?;
                let a1 = alt.cv_select(&boot, grid, mode).ok()?;
                PairFit::new(&boot, &n1, &a1, mode).ok()?.statistic(&y_star)
            } else {
                pair.statistic(&y_star)
            };
            stat.ok().map(|(s, _, _)| s).filter(|s| s.is_finite())
        })
        .collect();

    let bootstrap_stats: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let dropped = b - bootstrap_stats.len();
    if dropped as f64 > MAX_DROP_RATE * b as f64 {
        return Err(PlvcError::BootstrapFailed { dropped, requested: b });
    }
    Ok(TestResult {
        null: null.label(),
        alt: alt.label(),
        statistic,
        p_value: bootstrap_p_value(statistic, &bootstrap_stats),
        bootstrap_stats,
        b,
        seed,
        rss0,
        rss,
        dropped,
        multiplier: opts.multiplier,
    })
}
