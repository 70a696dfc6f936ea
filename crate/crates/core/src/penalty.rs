//! Quadratic penalty matrices `Q` for the ridge-lasso family and the square-root
//! factor `F` (`F'F = Q`) used to stack the penalty under the design.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::StandardizedDesign;
use crate::error::{GrilError, Result};

/// Correlations closer than this to +-1 make the correlation penalties undefined.
pub const CORR_EPS: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-10;
const CUSTOM_PSD_TOL: f64 = 1e-8;
const FACTOR_PSD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    /// Ridge term; gives the elastic net.
    Identity,
    /// Correlation-based penalty.
    Cnet,
    /// Weighted fusion with exponent `gamma_wf` on `|rho|`.
    WFusion { gamma_wf: f64 },
    /// Squared successive differences.
    SLasso,
    Custom(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub notes: String,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind) -> Self {
        Self {
            kind,
            notes: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PenaltyKind::WFusion { gamma_wf } if !(*gamma_wf > 0.0 && gamma_wf.is_finite()) => Err(
                GrilError::InvalidParameter(format!("gamma_wf must be positive, got {gamma_wf}")),
            ),
            PenaltyKind::Custom(q) => validate_custom(q).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Whether building `Q` needs the design (correlation-based kinds).
    pub fn depends_on_design(&self) -> bool {
        matches!(self.kind, PenaltyKind::Cnet | PenaltyKind::WFusion { .. })
    }

    pub fn build(&self, design: &StandardizedDesign) -> Result<PenaltyMatrix> {
        self.build_from_correlations(design.p(), || design.correlations())
    }

    /// Builds `Q` for a design whose columns need not be standardized; the
    /// correlation kinds use the empirical correlations of the columns.
    pub fn build_for_matrix(&self, x: &DMatrix<f64>) -> Result<PenaltyMatrix> {
        let p = x.ncols();
        match self.kind {
            PenaltyKind::Cnet | PenaltyKind::WFusion { .. } => {
                let corr = correlation_matrix(x)?;
                self.build_from_correlations(p, || corr)
            }
            _ => self.build_from_correlations(p, || unreachable!()),
        }
    }

    fn build_from_correlations(
        &self,
        p: usize,
        corr: impl FnOnce() -> DMatrix<f64>,
    ) -> Result<PenaltyMatrix> {
        self.validate()?;
        match &self.kind {
            PenaltyKind::Identity => build_identity(p),
            PenaltyKind::Cnet => cnet_from_correlations(&corr()),
            PenaltyKind::WFusion { gamma_wf } => wfusion_from_correlations(&corr(), *gamma_wf),
            PenaltyKind::SLasso => build_slasso(p),
            PenaltyKind::Custom(q) => {
                if q.nrows() != p {
                    return Err(GrilError::DimensionMismatch(format!(
                        "custom Q is {}x{} but design has p={p}",
                        q.nrows(),
                        q.ncols()
                    )));
                }
                PenaltyMatrix::from_q(q.clone())
            }
        }
    }
}

/// Symmetric PSD penalty matrix with its square-root factor and diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    q: DMatrix<f64>,
    factor: DMatrix<f64>,
    diag_q: DVector<f64>,
}

impl PenaltyMatrix {
    /// Validates symmetry/PSD and computes the factor.
    pub fn from_q(q: DMatrix<f64>) -> Result<Self> {
        validate_custom(&q)?;
        factorize(q)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `F` with `F'F = Q`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn diag_q(&self) -> &DVector<f64> {
        &self.diag_q
    }

    pub fn p(&self) -> usize {
        self.q.nrows()
    }

    pub fn quad_form(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&(&self.q * beta))
    }

    /// Reads a square comma-separated matrix (no header) and validates it.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_q(parse_square_csv(&text)?)
    }
}

pub fn parse_square_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| GrilError::Parse(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(GrilError::Parse("penalty matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

fn spectral_norm_and_min(q: &DMatrix<f64>) -> (f64, f64) {
    let eig = q.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (max_abs, eig.eigenvalues.min())
}

fn check_symmetric(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() {
        return Err(GrilError::DimensionMismatch(format!(
            "Q must be square, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(GrilError::NonFinite("penalty matrix".into()));
    }
    let asym = (q - q.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(GrilError::NotSymmetric(asym));
    }
    Ok(())
}

fn validate_custom(q: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(q)?;
    let (norm, min_eig) = spectral_norm_and_min(q);
    if min_eig < -CUSTOM_PSD_TOL * norm {
        return Err(GrilError::NotPsd(min_eig));
    }
    Ok(min_eig)
}

/// Empirical correlation matrix of the columns of `x`.
pub fn correlation_matrix(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm == 0.0 {
            return Err(GrilError::ZeroVarianceColumn(j));
        }
        col /= norm;
    }
    let mut c = z.tr_mul(&z);
    c.fill_diagonal(1.0);
    Ok(c)
}

fn check_correlations(corr: &DMatrix<f64>) -> Result<()> {
    let p = corr.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if corr[(i, j)].abs() > 1.0 - CORR_EPS {
                return Err(GrilError::NearDuplicatePredictors(i, j));
            }
        }
    }
    Ok(())
}

pub fn build_identity(p: usize) -> Result<PenaltyMatrix> {
    if p == 0 {
        return Err(GrilError::DimensionTooSmall("identity penalty needs p >= 1".into()));
    }
    Ok(PenaltyMatrix {
        q: DMatrix::identity(p, p),
        factor: DMatrix::identity(p, p),
        diag_q: DVector::from_element(p, 1.0),
    })
}

/// Correlation-based penalty: `2 sum_{s != i} 1/(1 - rho_is^2)` on the diagonal
/// and `-2 rho_ij / (1 - rho_ij^2)` off it.
pub fn build_cnet(design: &StandardizedDesign) -> Result<PenaltyMatrix> {
    cnet_from_correlations(&design.correlations())
}

pub fn cnet_from_correlations(corr: &DMatrix<f64>) -> Result<PenaltyMatrix> {
    check_correlations(corr)?;
    let p = corr.nrows();
    let mut q = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let r = corr[(i, j)];
            let d = 1.0 - r * r;
            q[(i, i)] += 2.0 / d;
            q[(i, j)] = -2.0 * r / d;
        }
    }
    symmetrize(&mut q);
    factorize(q)
}

/// Weighted fusion: `sum_{i<j} w_ij (beta_i - sgn(rho_ij) beta_j)^2` with
/// `w_ij = |rho_ij|^gamma_wf / (1 - |rho_ij|)`.
pub fn build_wfusion(design: &StandardizedDesign, gamma_wf: f64) -> Result<PenaltyMatrix> {
    wfusion_from_correlations(&design.correlations(), gamma_wf)
}

pub fn wfusion_from_correlations(corr: &DMatrix<f64>, gamma_wf: f64) -> Result<PenaltyMatrix> {
    if !(gamma_wf > 0.0 && gamma_wf.is_finite()) {
        return Err(GrilError::InvalidParameter(format!(
            "gamma_wf must be positive, got {gamma_wf}"
        )));
    }
    check_correlations(corr)?;
    let p = corr.nrows();
    let mut q = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let r = corr[(i, j)];
            let w = r.abs().powf(gamma_wf) / (1.0 - r.abs());
            q[(i, i)] += w;
            q[(i, j)] = -w * r.signum();
            if r == 0.0 {
                q[(i, j)] = 0.0;
            }
        }
    }
    symmetrize(&mut q);
    factorize(q)
}

/// Smooth-lasso penalty `sum_{j>=2} (beta_j - beta_{j-1})^2` (open chain).
pub fn build_slasso(p: usize) -> Result<PenaltyMatrix> {
    if p < 2 {
        return Err(GrilError::DimensionTooSmall(format!(
            "smooth-lasso penalty needs p >= 2, got {p}"
        )));
    }
    let mut q = DMatrix::zeros(p, p);
    for j in 0..p - 1 {
        q[(j, j)] += 1.0;
        q[(j + 1, j + 1)] += 1.0;
        q[(j, j + 1)] = -1.0;
        q[(j + 1, j)] = -1.0;
    }
    factorize(q)
}

fn symmetrize(q: &mut DMatrix<f64>) {
    let t = q.transpose();
    *q += t;
    *q *= 0.5;
}

/// Computes `F` with `F'F = Q`: Cholesky when `Q` is positive definite, else a
/// symmetric square root with negative eigenvalues clamped to zero.
pub fn factorize(q: DMatrix<f64>) -> Result<PenaltyMatrix> {
    check_symmetric(&q)?;
    let diag_q = q.diagonal();
    if let Some(chol) = q.clone().cholesky() {
        let factor = chol.l().transpose();
        if factor.iter().all(|v| v.is_finite()) {
            return Ok(PenaltyMatrix { q, factor, diag_q });
        }
    }
    let eig = q.clone().symmetric_eigen();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_eig = eig.eigenvalues.min();
    if min_eig < -FACTOR_PSD_TOL * norm {
        return Err(GrilError::NotPsd(min_eig));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let factor = v * DMatrix::from_diagonal(&sqrt_vals) * v.transpose();
    Ok(PenaltyMatrix { q, factor, diag_q })
}
