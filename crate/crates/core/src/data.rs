//! Regression data model: raw datasets, the centered/unit-norm standardization
//! used by every estimator, coefficient vectors and minimum-norm least squares.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{GrilError, Result};

/// Columns whose centered norm falls below this fraction of their raw norm are constant.
const ZERO_VARIANCE_TOL: f64 = 1e-12;
/// Relative singular-value cutoff for minimum-norm least squares.
pub const OLS_RANK_TOL: f64 = 1e-10;

/// Response vector and predictor matrix, validated for shape and finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(GrilError::LengthMismatch {
                y_len: y.len(),
                x_rows: x.nrows(),
            });
        }
        if x.nrows() < 2 || x.ncols() < 1 {
            return Err(GrilError::TooSmall {
                n: x.nrows(),
                p: x.ncols(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(GrilError::NonFinite("dataset entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(idx);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Dataset::new(x, y)
    }

    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }

    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        self.residual(beta).norm_squared()
    }

    /// Reads `y, x1, ..., xp` rows from a comma-separated file.
    pub fn from_csv_path(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
        let rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_path(path)?;
        Self::from_csv_reader(rdr)
    }

    pub fn from_csv_str(text: &str, has_header: bool) -> Result<Dataset> {
        let rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_csv_reader(rdr)
    }

    fn from_csv_reader<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Dataset> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| GrilError::Parse(format!("record {}: {f:?}: {e}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(GrilError::Parse(format!(
                        "record {} has {} fields, expected {}",
                        line + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 {
            return Err(GrilError::Parse(
                "need a response column and at least one predictor".into(),
            ));
        }
        let n = rows.len();
        let y = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
        let x = DMatrix::from_fn(n, width - 1, |i, j| rows[i][j + 1]);
        Dataset::new(x, y)
    }
}

/// Centered response and centered, unit-L2-norm predictors, with the
/// transformation recorded so coefficients can be mapped back.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDesign {
    data: Dataset,
    x_means: DVector<f64>,
    col_norms: DVector<f64>,
    y_mean: f64,
}

impl StandardizedDesign {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.data.x()
    }

    pub fn y(&self) -> &DVector<f64> {
        self.data.y()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn col_norms(&self) -> &DVector<f64> {
        &self.col_norms
    }

    pub fn x_means(&self) -> &DVector<f64> {
        &self.x_means
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    /// Empirical correlations `x_i' x_j` of the standardized columns.
    pub fn correlations(&self) -> DMatrix<f64> {
        self.x().tr_mul(self.x())
    }

    /// Maps standardized-scale coefficients to the original scale, returning
    /// `(beta, intercept)`.
    pub fn to_original(&self, beta_std: &DVector<f64>) -> (DVector<f64>, f64) {
        let beta = beta_std.component_div(&self.col_norms);
        let intercept = self.y_mean - self.x_means.dot(&beta);
        (beta, intercept)
    }

    /// Maps original-scale coefficients onto the standardized scale.
    pub fn to_standardized(&self, beta_orig: &DVector<f64>) -> DVector<f64> {
        beta_orig.component_mul(&self.col_norms)
    }
}

/// Centers `y`, centers every column of `X` and scales it to unit L2 norm.
pub fn standardize(data: &Dataset) -> Result<StandardizedDesign> {
    let n = data.n();
    let p = data.p();
    let y_mean = data.y().mean();
    let y = data.y().map(|v| v - y_mean);
    let mut x = data.x().clone();
    let mut x_means = DVector::zeros(p);
    let mut col_norms = DVector::zeros(p);
    for j in 0..p {
        let raw_norm = data.x().column(j).norm();
        let mean = data.x().column(j).sum() / n as f64;
        let mut col = x.column_mut(j);
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if !norm.is_finite() {
            return Err(GrilError::NonFinite(format!("norm of column {j}")));
        }
        if norm <= ZERO_VARIANCE_TOL * raw_norm || norm == 0.0 {
            return Err(GrilError::ZeroVarianceColumn(j));
        }
        col /= norm;
        x_means[j] = mean;
        col_norms[j] = norm;
    }
    Ok(StandardizedDesign {
        data: Dataset::new(x, y)?,
        x_means,
        col_norms,
        y_mean,
    })
}

/// Coefficients together with the exact set of nonzero indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    beta: DVector<f64>,
    active_set: BTreeSet<usize>,
}

impl CoefficientVector {
    pub fn new(beta: DVector<f64>) -> Self {
        let active_set = beta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        Self { beta, active_set }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(DVector::zeros(p))
    }

    /// Zeroes entries with magnitude below `tol` before recording the support.
    pub fn thresholded(beta: DVector<f64>, tol: f64) -> Self {
        Self::new(beta.map(|v| if v.abs() < tol { 0.0 } else { v }))
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn into_beta(self) -> DVector<f64> {
        self.beta
    }

    pub fn active_set(&self) -> &BTreeSet<usize> {
        &self.active_set
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn df(&self) -> usize {
        self.active_set.len()
    }
}

/// Minimum-L2-norm least-squares solution of `y ~ X beta` via the SVD.
pub fn ols_fit(data: &Dataset) -> Result<CoefficientVector> {
    let beta = min_norm_lstsq(data.x(), data.y())?;
    Ok(CoefficientVector::new(beta))
}

pub(crate) fn min_norm_lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let cutoff = OLS_RANK_TOL * s_max;
    let uty = u.tr_mul(y);
    let scaled = DVector::from_iterator(
        uty.len(),
        uty.iter()
            .zip(svd.singular_values.iter())
            .map(|(c, s)| if *s > cutoff && *s > 0.0 { c / s } else { 0.0 }),
    );
    let beta = v_t.tr_mul(&scaled);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(GrilError::NonFinite("least-squares solution".into()));
    }
    Ok(beta)
}
