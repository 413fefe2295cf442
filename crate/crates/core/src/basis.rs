//! Univariate basis systems for the varying coefficients.
//!
//! B-splines are evaluated with the Cox-de Boor recurrence on a clamped
//! (end-padded) knot vector. Power series are plain monomials. The explicit
//! truncated-power form of the uniform cubic B-spline is kept as
//! [`cardinal_cubic`] and serves as an independent check of the recurrence.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{PlvcError, Result};

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of evaluations (process wide) whose argument was clamped into the
/// knot range.
pub fn clamped_evaluations() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

/// What to do with an index value outside `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    /// Clamp into range and bump the global clamp counter.
    #[default]
    Clamp,
    /// Reject with [`PlvcError::OutOfDomain`].
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    interior: Vec<f64>,
    lo: f64,
    hi: f64,
    degree: usize,
}

/// Evenly spaced interior knots on `(lo, hi)`.
pub fn make_knots(lo: f64, hi: f64, num_interior: usize, degree: usize) -> Result<KnotVector> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(PlvcError::InvalidDomain { lo, hi });
    }
    if degree != 2 && degree != 3 {
        return Err(PlvcError::UnsupportedDegree(degree));
    }
    let step = (hi - lo) / (num_interior + 1) as f64;
    let interior = (1..=num_interior).map(|j| lo + j as f64 * step).collect();
    Ok(KnotVector {
        interior,
        lo,
        hi,
        degree,
    })
}

impl KnotVector {
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `interior + degree + 1`.
    pub fn dimension(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Knots with `degree + 1` copies of each end.
    pub fn extended(&self) -> Vec<f64> {
        let pad = self.degree + 1;
        let mut t = Vec::with_capacity(self.interior.len() + 2 * pad);
        t.extend(std::iter::repeat_n(self.lo, pad));
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.hi, pad));
        t
    }

    fn locate(&self, z: f64, mode: DomainMode) -> Result<f64> {
        if z.is_nan() {
            return Err(PlvcError::OutOfDomain {
                z,
                lo: self.lo,
                hi: self.hi,
            });
        }
        if z < self.lo || z > self.hi {
            return match mode {
                DomainMode::Strict => Err(PlvcError::OutOfDomain {
                    z,
                    lo: self.lo,
                    hi: self.hi,
                }),
                DomainMode::Clamp => {
                    CLAMPED.fetch_add(1, Ordering::Relaxed);
                    Ok(z.clamp(self.lo, self.hi))
                }
            };
        }
        Ok(z)
    }

    /// All `dimension()` basis values at `z`.
    pub fn eval(&self, z: f64, mode: DomainMode) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(z, mode, &mut out)?;
        Ok(out)
    }

    /// Writes the basis values into `out` (length `dimension()`).
    pub fn eval_into(&self, z: f64, mode: DomainMode, out: &mut [f64]) -> Result<()> {
        let z = self.locate(z, mode)?;
        let t = self.extended();
        let p = self.degree;
        let nbasis = self.dimension();
        debug_assert_eq!(out.len(), nbasis);
        out.iter_mut().for_each(|v| *v = 0.0);

        // span s with t[s] <= z < t[s+1]; the right end belongs to the last span
        let span = if z >= self.hi {
            nbasis - 1
        } else {
            let mut s = p;
            while s < nbasis - 1 && z >= t[s + 1] {
                s += 1;
            }
            s
        };

        // Cox-de Boor triangle for the p+1 nonzero functions on the span
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, v) in n.into_iter().enumerate() {
            out[span - p + r] = v;
        }
        Ok(())
    }
}

/// Uniform cubic B-spline on the five equally spaced knots `t`, written as a
/// signed sum of truncated cubes. With unit spacing this is exactly
/// `(1/3!) * sum_j (-1)^j C(4,j) max(0, z - t_j)^3`; for spacing `h` the sum
/// is divided by `h^3` so that the result matches the normalized B-spline.
pub fn cardinal_cubic(z: f64, t: [f64; 5]) -> f64 {
    if z <= t[0] || z >= t[4] {
        return 0.0;
    }
    const BINOM: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let h = (t[4] - t[0]) / 4.0;
    let s: f64 = (0..5)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * BINOM[j] * (z - t[j]).max(0.0).powi(3)
        })
        .sum();
    s / (6.0 * h * h * h)
}

/// `(1, z, z^2, ..., z^degree)`.
pub fn power_eval(degree: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut v = 1.0;
    for _ in 0..=degree {
        out.push(v);
        v *= z;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisSpec {
    #[serde(rename = "bspline")]
    BSpline(KnotVector),
    Power { degree: usize },
}

impl BasisSpec {
    /// B-spline system of the given dimension with evenly spaced knots.
    pub fn bspline(lo: f64, hi: f64, dimension: usize, degree: usize) -> Result<Self> {
        if dimension < degree + 1 {
            return Err(PlvcError::BasisTooSmall {
                dim: dimension,
                degree,
                min: degree + 1,
            });
        }
        Ok(BasisSpec::BSpline(make_knots(
            lo,
            hi,
            dimension - degree - 1,
            degree,
        )?))
    }

    pub fn power(degree: usize) -> Self {
        BasisSpec::Power { degree }
    }

    pub fn dimension(&self) -> usize {
        match self {
            BasisSpec::BSpline(kv) => kv.dimension(),
            BasisSpec::Power { degree } => degree + 1,
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            BasisSpec::BSpline(kv) => kv.degree(),
            BasisSpec::Power { degree } => *degree,
        }
    }

    pub fn eval(&self, z: f64, mode: DomainMode) -> Result<Vec<f64>> {
        match self {
            BasisSpec::BSpline(kv) => kv.eval(z, mode),
            BasisSpec::Power { degree } => Ok(power_eval(*degree, z)),
        }
    }

    pub fn eval_into(&self, z: f64, mode: DomainMode, out: &mut [f64]) -> Result<()> {
        match self {
            BasisSpec::BSpline(kv) => kv.eval_into(z, mode, out),
            BasisSpec::Power { degree } => {
                let mut v = 1.0;
                for o in out.iter_mut().take(degree + 1) {
                    *o = v;
                    v *= z;
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            BasisSpec::BSpline(kv) => format!("bspline(degree={}, k={})", kv.degree(), kv.dimension()),
            BasisSpec::Power { degree } => format!("power(degree={degree})"),
        }
    }
}

/// Data-independent description of a basis; resolved against the index
/// range of a dataset with [`BasisTemplate::resolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisTemplate {
    #[serde(rename = "bspline")]
    BSpline { degree: usize, dimension: usize },
    Power { degree: usize },
}

impl BasisTemplate {
    pub fn cubic(dimension: usize) -> Self {
        BasisTemplate::BSpline {
            degree: 3,
            dimension,
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            BasisTemplate::BSpline { dimension, .. } => dimension,
            BasisTemplate::Power { degree } => degree + 1,
        }
    }

    pub fn resolve(&self, lo: f64, hi: f64) -> Result<BasisSpec> {
        match *self {
            BasisTemplate::BSpline { degree, dimension } => {
                BasisSpec::bspline(lo, hi, dimension, degree)
            }
            BasisTemplate::Power { degree } => Ok(BasisSpec::power(degree)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BasisTemplate::BSpline { degree, dimension } => {
                format!("bspline(degree={degree}, k={dimension})")
            }
            BasisTemplate::Power { degree } => format!("power(degree={degree})"),
        }
    }
}
