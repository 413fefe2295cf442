#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use plvc::montecarlo::stream_rng;
use plvc::Dataset;
use rand::Rng;

/// Random sample with `q` linear regressors, `d - 1` non-constant varying
/// regressors plus the intercept, and a smooth truth.
pub fn random_dataset(seed: u64, n: usize, q: usize, d: usize, noise: f64) -> Dataset {
    let mut rng = stream_rng(seed, 99);
    let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
    let w = DMatrix::from_fn(n, q, |i, _| z[i] + rng.random_range(-1.0..1.0));
    let x = DMatrix::from_fn(n, d - 1, |_, _| rng.random_range(0.5..2.0));
    let y = DVector::from_fn(n, |i, _| {
        let mut v = (4.0 * z[i]).sin();
        for j in 0..q {
            v += (j as f64 + 1.0) * 0.3 * w[(i, j)];
        }
        for l in 0..d - 1 {
            v += x[(i, l)] * (z[i] * (l as f64 + 1.0)).cos();
        }
        v + noise * rng.random_range(-1.0..1.0)
    });
    Dataset::new(y, w, x, z, None).unwrap()
}

/// Least squares via SVD, the reference for every QR-based solve.
pub fn svd_ls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().svd(true, true).solve(b, 1e-12).unwrap()
}

/// `[W, P]` side by side.
pub fn joint(w: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut j = DMatrix::zeros(n, w.ncols() + p.ncols());
    j.view_mut((0, 0), (n, w.ncols())).copy_from(w);
    j.view_mut((0, w.ncols()), (n, p.ncols())).copy_from(p);
    j
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
