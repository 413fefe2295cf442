//! Datasets and series design matrices.
//!
//! Every dataset carries a varying intercept: column 0 of the varying block
//! is identically one. The series regressor for observation i interleaves the
//! coefficient blocks as `(x_i1 * p_1(z_i)', ..., x_id * p_d(z_i)')'`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, BasisTemplate, DomainMode};
use crate::error::{PlvcError, Result};

/// Smallest sample size accepted at ingestion.
pub const MIN_OBSERVATIONS: usize = 10;

pub const INTERCEPT_LABEL: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColumnLabels {
    pub response: String,
    pub linear: Vec<String>,
    /// Includes the intercept label in position 0.
    pub varying: Vec<String>,
    pub index: String,
}

/// Where the model intercept lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    /// A varying intercept `beta_0(z)`: a column of ones leads the varying block.
    #[default]
    Varying,
    /// A constant intercept: a column of ones ends the linear block.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    z: DVector<f64>,
    labels: ColumnLabels,
}

impl Dataset {
    /// Builds a dataset from a response, a linear block `w` (n x q, q may be
    /// 0), the non-intercept varying regressors `x` (n x (d-1)) and the index
    /// `z`. An intercept column is prepended to `x`.
    pub fn new(
        y: DVector<f64>,
        w: DMatrix<f64>,
        x: DMatrix<f64>,
        z: DVector<f64>,
        labels: Option<ColumnLabels>,
    ) -> Result<Self> {
        Self::with_intercept(y, w, x, z, labels, InterceptMode::Varying)
    }

    /// As [`Dataset::new`], with the intercept placed according to `mode`.
    /// With [`InterceptMode::Constant`] the ones column is appended to `w`
    /// and `x` must have at least one column.
    pub fn with_intercept(
        y: DVector<f64>,
        w: DMatrix<f64>,
        x: DMatrix<f64>,
        z: DVector<f64>,
        labels: Option<ColumnLabels>,
        mode: InterceptMode,
    ) -> Result<Self> {
        let n = y.len();
        if w.nrows() != n || x.nrows() != n || z.len() != n {
            return Err(PlvcError::Dimension(format!(
                "row counts differ: y {n}, w {}, x {}, z {}",
                w.nrows(),
                x.nrows(),
                z.len()
            )));
        }
        if n < MIN_OBSERVATIONS {
            return Err(PlvcError::Ingestion {
                row: None,
                column: None,
                message: format!("need at least {MIN_OBSERVATIONS} observations, got {n}"),
            });
        }
        let labels = labels.unwrap_or_else(|| ColumnLabels {
            response: "y".into(),
            linear: (1..=w.ncols()).map(|j| format!("w{j}")).collect(),
            varying: (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
            index: "z".into(),
        });
        if labels.linear.len() != w.ncols() || labels.varying.len() != x.ncols() {
            return Err(PlvcError::Dimension("label counts do not match columns".into()));
        }

        let check = |v: f64, row: usize, col: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(PlvcError::Ingestion {
                    row: Some(row),
                    column: Some(col.to_string()),
                    message: format!("non-finite value {v}"),
                })
            }
        };
        for i in 0..n {
            check(y[i], i, &labels.response)?;
            check(z[i], i, &labels.index)?;
            for (j, name) in labels.linear.iter().enumerate() {
                check(w[(i, j)], i, name)?;
            }
            for (j, name) in labels.varying.iter().enumerate() {
                check(x[(i, j)], i, name)?;
            }
        }

        match mode {
            InterceptMode::Varying => {
                let mut xi = DMatrix::from_element(n, x.ncols() + 1, 1.0);
                xi.view_mut((0, 1), (n, x.ncols())).copy_from(&x);
                let mut varying = vec![INTERCEPT_LABEL.to_string()];
                varying.extend(labels.varying);
                Ok(Self {
                    y,
                    w,
                    x: xi,
                    z,
                    labels: ColumnLabels { varying, ..labels },
                })
            }
            InterceptMode::Constant => {
                if x.ncols() == 0 {
                    return Err(PlvcError::Dimension(
                        "a constant intercept needs at least one varying regressor".into(),
                    ));
                }
                let q = w.ncols();
                let mut wi = DMatrix::from_element(n, q + 1, 1.0);
                wi.view_mut((0, 0), (n, q)).copy_from(&w);
                let mut linear = labels.linear;
                linear.push(INTERCEPT_LABEL.to_string());
                Ok(Self {
                    y,
                    w: wi,
                    x,
                    z,
                    labels: ColumnLabels { linear, ..labels },
                })
            }
        }
    }

    /// Whether the intercept sits in the varying block.
    pub fn intercept_mode(&self) -> InterceptMode {
        if self.labels.varying.first().map(String::as_str) == Some(INTERCEPT_LABEL) {
            InterceptMode::Varying
        } else if self.labels.linear.last().map(String::as_str) == Some(INTERCEPT_LABEL) {
            InterceptMode::Constant
        } else {
            InterceptMode::Varying
        }
    }

    /// Same regressors, new response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(PlvcError::Dimension("response length".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PlvcError::Ingestion {
                row: Some(i),
                column: Some(self.labels.response.clone()),
                message: "non-finite value".into(),
            });
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Moves the linear block into the varying block (a pure varying
    /// coefficient model with no constant coefficients).
    pub fn absorb_linear(&self) -> Self {
        let n = self.n();
        let (d, q) = (self.d(), self.q());
        let mut x = DMatrix::zeros(n, d + q);
        x.view_mut((0, 0), (n, d)).copy_from(&self.x);
        x.view_mut((0, d), (n, q)).copy_from(&self.w);
        let mut varying = self.labels.varying.clone();
        varying.extend(self.labels.linear.iter().cloned());
        Self {
            y: self.y.clone(),
            w: DMatrix::zeros(n, 0),
            x,
            z: self.z.clone(),
            labels: ColumnLabels {
                linear: vec![],
                varying,
                ..self.labels.clone()
            },
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn labels(&self) -> &ColumnLabels {
        &self.labels
    }

    /// Empirical range of the index.
    pub fn z_range(&self) -> (f64, f64) {
        self.z
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            y: self.y.select_rows(rows),
            w: self.w.select_rows(rows),
            x: self.x.select_rows(rows),
            z: self.z.select_rows(rows),
            labels: self.labels.clone(),
        }
    }
}

/// A parsed CSV-like table: header plus string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Assignment of table columns to model roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub response: String,
    #[serde(default)]
    pub linear: Vec<String>,
    #[serde(default)]
    pub varying: Vec<String>,
    pub index: String,
    #[serde(default)]
    pub intercept: InterceptMode,
}

/// Checks a raw table against the role assignment and builds a dataset.
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn validate_dataset(raw: &RawTable, roles: &ColumnRoles) -> Result<Dataset> {
    let position: HashMap<&str, usize> = raw
        .headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let lookup = |name: &str| -> Result<usize> {
        position.get(name).copied().ok_or_else(|| PlvcError::Ingestion {
            row: None,
            column: Some(name.to_string()),
            message: "missing column".into(),
        })
    };
    let y_col = lookup(&roles.response)?;
    let z_col = lookup(&roles.index)?;
    let w_cols = roles.linear.iter().map(|c| lookup(c)).collect::<Result<Vec<_>>>()?;
    let x_cols = roles.varying.iter().map(|c| lookup(c)).collect::<Result<Vec<_>>>()?;

    let n = raw.rows.len();
    let cell = |i: usize, col: usize| -> Result<f64> {
        let row = &raw.rows[i];
        let text = row.get(col).ok_or_else(|| PlvcError::Ingestion {
            row: Some(i + 1),
            column: Some(raw.headers[col].clone()),
            message: "row too short".into(),
        })?;
        let v: f64 = text.trim().parse().map_err(|_| PlvcError::Ingestion {
            row: Some(i + 1),
            column: Some(raw.headers[col].clone()),
            message: format!("non-numeric cell {text:?}"),
        })?;
        if !v.is_finite() {
            return Err(PlvcError::Ingestion {
                row: Some(i + 1),
                column: Some(raw.headers[col].clone()),
                message: format!("non-finite value {text:?}"),
            });
        }
        Ok(v)
    };

    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, w_cols.len());
    let mut x = DMatrix::zeros(n, x_cols.len());
    for i in 0..n {
        y[i] = cell(i, y_col)?;
        z[i] = cell(i, z_col)?;
        for (j, &c) in w_cols.iter().enumerate() {
            w[(i, j)] = cell(i, c)?;
        }
        for (j, &c) in x_cols.iter().enumerate() {
            x[(i, j)] = cell(i, c)?;
        }
    }
    Dataset::with_intercept(
        y,
        w,
        x,
        z,
        Some(ColumnLabels {
            response: roles.response.clone(),
            linear: roles.linear.clone(),
            varying: roles.varying.clone(),
            index: roles.index.clone(),
        }),
        roles.intercept,
    )
}

/// One basis per varying coefficient, in block order.
pub type SpecSet = Vec<BasisSpec>;

/// The same template for every block, resolved over `[lo, hi]`.
pub fn uniform_specs(template: &BasisTemplate, d: usize, lo: f64, hi: f64) -> Result<SpecSet> {
    let spec = template.resolve(lo, hi)?;
    Ok(vec![spec; d])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub p: DMatrix<f64>,
    /// Cut points: block l occupies columns `block_offsets[l]..block_offsets[l+1]`.
    pub block_offsets: Vec<usize>,
    pub specs: SpecSet,
}

impl DesignMatrix {
    pub fn total_dimension(&self) -> usize {
        *self.block_offsets.last().unwrap_or(&0)
    }

    pub fn block(&self, l: usize) -> std::ops::Range<usize> {
        self.block_offsets[l]..self.block_offsets[l + 1]
    }
}

fn offsets(specs: &[BasisSpec]) -> Vec<usize> {
    let mut out = Vec::with_capacity(specs.len() + 1);
    out.push(0);
    for s in specs {
        out.push(out.last().unwrap() + s.dimension());
    }
    out
}

/// `(x_1 p_1(z)', ..., x_d p_d(z)')'`.
pub fn build_regressor(x_row: &[f64], z: f64, specs: &[BasisSpec], mode: DomainMode) -> Result<Vec<f64>> {
    if x_row.len() != specs.len() {
        return Err(PlvcError::Dimension(format!(
            "{} regressors but {} basis specs",
            x_row.len(),
            specs.len()
        )));
    }
    let mut out = Vec::with_capacity(specs.iter().map(|s| s.dimension()).sum());
    for (xl, spec) in x_row.iter().zip(specs) {
        out.extend(spec.eval(z, mode)?.into_iter().map(|b| xl * b));
    }
    Ok(out)
}

pub fn build_design(ds: &Dataset, specs: &[BasisSpec], mode: DomainMode) -> Result<DesignMatrix> {
    build_design_parts(ds.x(), ds.z(), specs, mode)
}

/// Design from a raw varying block and index (used when the response or the
/// rows differ from a stored dataset).
pub fn build_design_parts(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    specs: &[BasisSpec],
    mode: DomainMode,
) -> Result<DesignMatrix> {
    if x.ncols() != specs.len() {
        return Err(PlvcError::Dimension(format!(
            "{} varying regressors but {} basis specs",
            x.ncols(),
            specs.len()
        )));
    }
    let n = x.nrows();
    let block_offsets = offsets(specs);
    let k = *block_offsets.last().unwrap();
    let mut p = DMatrix::zeros(n, k);
    let max_dim = specs.iter().map(|s| s.dimension()).max().unwrap_or(0);
    let mut buf = vec![0.0; max_dim];
    for i in 0..n {
        for (l, spec) in specs.iter().enumerate() {
            let dim = spec.dimension();
            spec.eval_into(z[i], mode, &mut buf[..dim])?;
            let xl = x[(i, l)];
            for (c, b) in buf[..dim].iter().enumerate() {
                p[(i, block_offsets[l] + c)] = xl * b;
            }
        }
    }
    Ok(DesignMatrix {
        p,
        block_offsets,
        specs: specs.to_vec(),
    })
}
