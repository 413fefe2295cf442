//! Leave-one-out least-squares cross-validation over basis configurations.
//!
//! The series fit is a linear smoother, so the leave-one-out prediction error
//! of observation i is `u_i / (1 - h_ii)` with `h_ii` the diagonal of the hat
//! matrix of the joint regression on `[W, P]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, BasisTemplate, DomainMode};
use crate::design::{build_design, uniform_specs, Dataset, SpecSet};
use crate::error::{PlvcError, Result};
use crate::estimator::VarianceModel;
use crate::linalg::{PivotedQr, DEFAULT_RANK_TOL};

/// A leverage at or above `1 - SATURATION_TOL` means the fit interpolates.
pub const SATURATION_TOL: f64 = 1e-8;

/// Relative tolerance for declaring two CV scores tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    /// Basis dimension of each coefficient block (empty for bandwidths).
    pub per_block_k: Vec<usize>,
    pub total_k: usize,
    pub bandwidth: Option<f64>,
}

impl Candidate {
    pub fn from_specs(specs: &[BasisSpec]) -> Self {
        let per_block_k: Vec<usize> = specs.iter().map(|s| s.dimension()).collect();
        let total_k = per_block_k.iter().sum();
        let label = if specs.windows(2).all(|w| w[0] == w[1]) && !specs.is_empty() {
            specs[0].label()
        } else {
            specs.iter().map(|s| s.label()).collect::<Vec<_>>().join("+")
        };
        Self {
            label,
            per_block_k,
            total_k,
            bandwidth: None,
        }
    }

    pub fn from_bandwidth(h: f64) -> Self {
        Self {
            label: format!("h={h}"),
            per_block_k: vec![],
            total_k: 0,
            bandwidth: Some(h),
        }
    }

    // Smaller is more parsimonious: fewer terms, or a wider bandwidth.
    fn parsimony(&self) -> f64 {
        match self.bandwidth {
            Some(h) => -h,
            None => self.total_k as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub candidates: Vec<Candidate>,
    /// Sum of squared leave-one-out prediction errors; `None` if not evaluable.
    pub scores: Vec<Option<f64>>,
    pub in_sample_rss: Vec<Option<f64>>,
    pub selected: usize,
    pub ties: Vec<usize>,
    /// Non-evaluable candidates and the reason.
    pub skipped: Vec<(usize, String)>,
}

impl CvReport {
    pub fn selected_candidate(&self) -> &Candidate {
        &self.candidates[self.selected]
    }

    /// Builds a report, choosing the minimum score and breaking ties towards
    /// the most parsimonious candidate.
    pub fn assemble(
        candidates: Vec<Candidate>,
        outcomes: Vec<Result<(f64, f64)>>,
    ) -> Result<Self> {
        let mut scores = Vec::with_capacity(outcomes.len());
        let mut rss = Vec::with_capacity(outcomes.len());
        let mut skipped = Vec::new();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok((s, r)) if s.is_finite() => {
                    scores.push(Some(s));
                    rss.push(Some(r));
                }
                Ok((s, _)) => {
                    scores.push(None);
                    rss.push(None);
                    skipped.push((i, format!("non-finite score {s}")));
                }
                Err(e) => {
                    scores.push(None);
                    rss.push(None);
                    skipped.push((i, e.to_string()));
                }
            }
        }
        let best = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(PlvcError::Selection("no candidate could be evaluated".into()));
        }
        let ties: Vec<usize> = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Some(s) if (*s - best).abs() <= TIE_TOL * best.abs().max(f64::MIN_POSITIVE) => Some(i),
                _ => None,
            })
            .collect();
        let selected = *ties
            .iter()
            .min_by(|&&a, &&b| {
                candidates[a]
                    .parsimony()
                    .total_cmp(&candidates[b].parsimony())
                    .then(a.cmp(&b))
            })
            .expect("at least one tie");
        Ok(Self {
            candidates,
            scores,
            in_sample_rss: rss,
            selected,
            ties,
            skipped,
        })
    }
}

/// `(cv score, in-sample rss)` of the joint series regression.
pub fn loo_parts(ds: &Dataset, specs: &[BasisSpec], mode: DomainMode) -> Result<(f64, f64)> {
    scaled_loo_parts(ds, specs, mode, None)
}

/// As [`loo_parts`] for the model with every term divided by
/// `sqrt(vm(z_i))`; scores are in the transformed units.
pub fn weighted_loo_parts(ds: &Dataset, specs: &[BasisSpec], mode: DomainMode, vm: &VarianceModel) -> Result<(f64, f64)> {
    let scale = DVector::from_fn(ds.n(), |i, _| 1.0 / vm.eval(ds.z()[i]).sqrt());
    if !scale.iter().all(|s| s.is_finite()) {
        return Err(PlvcError::Config("variance model not positive".into()));
    }
    scaled_loo_parts(ds, specs, mode, Some(&scale))
}

fn scaled_loo_parts(ds: &Dataset, specs: &[BasisSpec], mode: DomainMode, scale: Option<&DVector<f64>>) -> Result<(f64, f64)> {
    let design = build_design(ds, specs, mode)?;
    let (n, q) = (ds.n(), ds.q());
    let k = design.p.ncols();
    let mut joint = DMatrix::zeros(n, q + k);
    joint.view_mut((0, 0), (n, q)).copy_from(ds.w());
    joint.view_mut((0, q), (n, k)).copy_from(&design.p);
    let mut y = ds.y().clone();
    if let Some(s) = scale {
        for i in 0..n {
            joint.row_mut(i).scale_mut(s[i]);
            y[i] *= s[i];
        }
    }

    let qr = PivotedQr::new(&joint, DEFAULT_RANK_TOL);
    let resid = qr.residual_vec(&y);
    let hat = qr.hat_diagonal();
    let mut score = 0.0;
    for (i, (&u, &h)) in resid.iter().zip(&hat).enumerate() {
        if h >= 1.0 - SATURATION_TOL {
            return Err(PlvcError::Saturated { index: i, leverage: h });
        }
        score += (u / (1.0 - h)).powi(2);
    }
    Ok((score, resid.norm_squared()))
}

/// Sum of squared leave-one-out prediction errors.
pub fn loo_cv_score(ds: &Dataset, specs: &[BasisSpec], mode: DomainMode) -> Result<f64> {
    loo_parts(ds, specs, mode).map(|(s, _)| s)
}

/// Evaluates every spec set in `grid` and picks the CV minimizer.
pub fn select_basis(ds: &Dataset, grid: &[SpecSet], mode: DomainMode) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(PlvcError::Selection("empty grid".into()));
    }
    let outcomes: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|specs| loo_parts(ds, specs, mode))
        .collect();
    let candidates = grid.iter().map(|s| Candidate::from_specs(s)).collect();
    CvReport::assemble(candidates, outcomes)
}

/// [`select_basis`] for the weighted model.
pub fn select_basis_weighted(ds: &Dataset, grid: &[SpecSet], mode: DomainMode, vm: &VarianceModel) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(PlvcError::Selection("empty grid".into()));
    }
    let outcomes: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|specs| weighted_loo_parts(ds, specs, mode, vm))
        .collect();
    let candidates = grid.iter().map(|s| Candidate::from_specs(s)).collect();
    CvReport::assemble(candidates, outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub candidate: String,
    pub per_block_k: Vec<usize>,
    pub total_k: usize,
    pub bandwidth: Option<f64>,
    pub cv_score: Option<f64>,
    pub in_sample_rss: Option<f64>,
}

/// The full curve as rows, one per grid entry.
pub fn curve_rows(report: &CvReport) -> Vec<CvRow> {
    report
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| CvRow {
            candidate: c.label.clone(),
            per_block_k: c.per_block_k.clone(),
            total_k: c.total_k,
            bandwidth: c.bandwidth,
            cv_score: report.scores[i],
            in_sample_rss: report.in_sample_rss[i],
        })
        .collect()
}

pub fn cv_curve(ds: &Dataset, grid: &[SpecSet], mode: DomainMode) -> Result<Vec<CvRow>> {
    select_basis(ds, grid, mode).map(|r| curve_rows(&r))
}

/// Shared-dimension grid: for each degree and each per-block dimension, the
/// same template on every coefficient block over the empirical index range.
pub fn template_grid(ds: &Dataset, templates: &[BasisTemplate]) -> Result<Vec<SpecSet>> {
    let (lo, hi) = ds.z_range();
    templates
        .iter()
        .map(|t| uniform_specs(t, ds.d(), lo, hi))
        .collect()
}

/// Cubic/quadratic B-spline templates for every `degree x dimension` pair
/// that is valid (dimension > degree).
pub fn spline_templates(degrees: &[usize], dims: impl IntoIterator<Item = usize> + Clone) -> Vec<BasisTemplate> {
    let mut out = Vec::new();
    for &degree in degrees {
        for dimension in dims.clone() {
            if dimension > degree {
                out.push(BasisTemplate::BSpline { degree, dimension });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> Dataset {
        let mut s: u64 = 99;
        let mut r = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let z = DVector::from_fn(n, |_, _| r());
        let w = DMatrix::from_fn(n, 1, |_, _| r());
        let x = DMatrix::from_fn(n, 1, |_, _| r());
        let y = DVector::from_fn(n, |i, _| w[(i, 0)] + (3.0 * z[i]).sin() * x[(i, 0)] + r() - 0.5);
        Dataset::new(y, w, x, z, None).unwrap()
    }

    #[test]
    fn single_candidate_is_selected() {
        let ds = data(40);
        let grid = template_grid(&ds, &[BasisTemplate::cubic(5)]).unwrap();
        let rep = select_basis(&ds, &grid, DomainMode::Clamp).unwrap();
        assert_eq!(rep.selected, 0);
        assert_eq!(rep.candidates[0].total_k, 10);
    }

    #[test]
    fn interpolating_fit_saturates() {
        let ds = data(11);
        // q + K = 1 + 2 * 5 = 11 = n
        let grid = template_grid(&ds, &[BasisTemplate::cubic(5)]).unwrap();
        assert!(matches!(
            loo_cv_score(&ds, &grid[0], DomainMode::Clamp),
            Err(PlvcError::Saturated { .. })
        ));
        assert!(matches!(
            select_basis(&ds, &grid, DomainMode::Clamp),
            Err(PlvcError::Selection(_))
        ));
    }

    #[test]
    fn ties_go_to_smallest_model() {
        let cands = vec![
            Candidate { label: "a".into(), per_block_k: vec![8], total_k: 8, bandwidth: None },
            Candidate { label: "b".into(), per_block_k: vec![5], total_k: 5, bandwidth: None },
            Candidate { label: "c".into(), per_block_k: vec![6], total_k: 6, bandwidth: None },
        ];
        let rep = CvReport::assemble(cands, vec![Ok((1.0, 0.5)), Ok((1.0, 0.6)), Ok((2.0, 0.4))]).unwrap();
        assert_eq!(rep.ties, vec![0, 1]);
        assert_eq!(rep.selected, 1);

        let hs = vec![Candidate::from_bandwidth(0.1), Candidate::from_bandwidth(0.3)];
        let rep = CvReport::assemble(hs, vec![Ok((1.0, 0.0)), Ok((1.0, 0.0))]).unwrap();
        assert_eq!(rep.selected, 1);
    }

    #[test]
    fn nested_grid_rss_nonincreasing() {
        let ds = data(80);
        // power bases are nested as the degree grows
        let templates: Vec<_> = (1..7).map(|degree| BasisTemplate::Power { degree }).collect();
        let grid = template_grid(&ds, &templates).unwrap();
        let rep = select_basis(&ds, &grid, DomainMode::Clamp).unwrap();
        let rss: Vec<f64> = rep.in_sample_rss.iter().map(|r| r.unwrap()).collect();
        for pair in rss.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
        assert_eq!(cv_curve(&ds, &grid, DomainMode::Clamp).unwrap().len(), grid.len());
    }

    #[test]
    fn constant_weights_rescale_the_score() {
        let ds = data(50);
        let grid = template_grid(&ds, &[BasisTemplate::cubic(5)]).unwrap();
        let (plain, rss) = loo_parts(&ds, &grid[0], DomainMode::Clamp).unwrap();
        let vm = VarianceModel::constant(4.0);
        let (w, wrss) = weighted_loo_parts(&ds, &grid[0], DomainMode::Clamp, &vm).unwrap();
        assert!((w - plain / 4.0).abs() < 1e-12 * plain);
        assert!((wrss - rss / 4.0).abs() < 1e-12 * rss);
    }

    #[test]
    fn spline_template_filtering() {
        let t = spline_templates(&[2, 3], 3..=5);
        assert_eq!(t.len(), 5);
    }
}
