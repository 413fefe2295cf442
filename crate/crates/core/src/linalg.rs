//! Householder QR with column pivoting.
//!
//! The factorization stops as soon as the largest remaining column norm
//! falls below a threshold, which gives a numerical rank and a basic
//! least-squares solution for rank-deficient systems. Dropped columns get
//! zero coefficients, which is the "remove the redundant regressors" form of
//! a generalized inverse.

use nalgebra::{DMatrix, DVector};

/// Default pivot tolerance, relative to the largest column norm.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PivotedQr {
    // R on and above the diagonal, Householder vectors (implicit unit head) below.
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factor `a` with pivot threshold `rel_tol * max_j ||a_j||`.
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let max_norm = (0..a.ncols())
            .map(|j| a.column(j).norm())
            .fold(0.0_f64, f64::max);
        Self::with_threshold(a, rel_tol * max_norm)
    }

    /// Factor `a`, treating any remaining column whose norm is at most
    /// `threshold` as numerically dependent.
    pub fn with_threshold(a: &DMatrix<f64>, threshold: f64) -> Self {
        let (n, m) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut tau = Vec::with_capacity(n.min(m));
        let mut rank = 0;

        for k in 0..n.min(m) {
            let (jmax, best) = (k..m)
                .map(|j| (j, tail_norm_sq(&qr, k, j)))
                .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let norm = best.max(0.0).sqrt();
            if norm <= threshold || norm == 0.0 {
                break;
            }
            if jmax != k {
                qr.swap_columns(k, jmax);
                perm.swap(k, jmax);
            }

            let x0 = qr[(k, k)];
            let beta = if x0 >= 0.0 { -norm } else { norm };
            let t = (beta - x0) / beta;
            let scale = 1.0 / (x0 - beta);
            for i in k + 1..n {
                qr[(i, k)] *= scale;
            }
            qr[(k, k)] = beta;

            for j in k + 1..m {
                let mut s = qr[(k, j)];
                for i in k + 1..n {
                    s += qr[(i, k)] * qr[(i, j)];
                }
                s *= t;
                qr[(k, j)] -= s;
                for i in k + 1..n {
                    let v = qr[(i, k)];
                    qr[(i, j)] -= s * v;
                }
            }
            tau.push(t);
            rank += 1;
        }

        Self { qr, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nrows(&self) -> usize {
        self.qr.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols()
    }

    /// Column order chosen by pivoting; the first `rank` entries are the
    /// retained columns.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Original column indices judged linearly dependent on the retained ones.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// |R_kk| for the retained pivots, nonincreasing.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.rank).map(|k| self.qr[(k, k)].abs()).collect()
    }

    fn reflect(&self, k: usize, b: &mut DMatrix<f64>) {
        let n = self.qr.nrows();
        let t = self.tau[k];
        for j in 0..b.ncols() {
            let mut s = b[(k, j)];
            for i in k + 1..n {
                s += self.qr[(i, k)] * b[(i, j)];
            }
            s *= t;
            b[(k, j)] -= s;
            for i in k + 1..n {
                b[(i, j)] -= s * self.qr[(i, k)];
            }
        }
    }

    /// In place: b <- Q' b.
    pub fn apply_qt(&self, b: &mut DMatrix<f64>) {
        for k in 0..self.rank {
            self.reflect(k, b);
        }
    }

    /// In place: b <- Q b.
    pub fn apply_q(&self, b: &mut DMatrix<f64>) {
        for k in (0..self.rank).rev() {
            self.reflect(k, b);
        }
    }

    /// Orthogonal projection of every column of `a` onto the column space.
    pub fn project(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut b = a.clone();
        self.apply_qt(&mut b);
        for j in 0..b.ncols() {
            for i in self.rank..b.nrows() {
                b[(i, j)] = 0.0;
            }
        }
        self.apply_q(&mut b);
        b
    }

    /// (I - M) a: the part of each column orthogonal to the column space.
    pub fn annihilate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut b = a.clone();
        self.apply_qt(&mut b);
        for j in 0..b.ncols() {
            for i in 0..self.rank.min(b.nrows()) {
                b[(i, j)] = 0.0;
            }
        }
        self.apply_q(&mut b);
        b
    }

    pub fn residual_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        DVector::from_column_slice(self.annihilate(&m).as_slice())
    }

    /// Basic least-squares solution of min ||A x - b||; dependent columns get 0.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut c = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.apply_qt(&mut c);
        let r = self.rank;
        let mut x = vec![0.0; r];
        for k in (0..r).rev() {
            let mut s = c[(k, 0)];
            for j in k + 1..r {
                s -= self.qr[(k, j)] * x[j];
            }
            x[k] = s / self.qr[(k, k)];
        }
        let mut out = DVector::zeros(self.qr.ncols());
        for (k, &xk) in x.iter().enumerate() {
            out[self.perm[k]] = xk;
        }
        out
    }

    /// The n x rank orthonormal basis Q_1 of the column space.
    pub fn thin_q(&self) -> DMatrix<f64> {
        let n = self.qr.nrows();
        let mut e = DMatrix::zeros(n, self.rank);
        for k in 0..self.rank {
            e[(k, k)] = 1.0;
        }
        self.apply_q(&mut e);
        e
    }

    /// Diagonal of the projection (hat) matrix.
    pub fn hat_diagonal(&self) -> Vec<f64> {
        let q = self.thin_q();
        (0..q.nrows())
            .map(|i| q.row(i).iter().map(|v| v * v).sum())
            .collect()
    }
}

fn tail_norm_sq(a: &DMatrix<f64>, from_row: usize, col: usize) -> f64 {
    a.view((from_row, col), (a.nrows() - from_row, 1))
        .iter()
        .map(|v| v * v)
        .sum()
}

/// Inverse of a symmetric positive definite matrix, `None` when the
/// Cholesky factorization fails.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse())
}
