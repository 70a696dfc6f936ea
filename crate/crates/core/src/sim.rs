//! Monte-Carlo harness for the ten-estimator benchmark.
//!
//! Data: `p = floor(4 sqrt(n)) - 5`, `q = floor(p / 9)`, coefficients
//! `(1..q, 0 x (p - 3q), 3 x q, -1..-q)`, rows `x ~ N(0, R)` with
//! `R_ij = rho^|i-j|` and Gaussian noise. Every estimator is tuned on the
//! standardized design and mapped back to the original scale before scoring.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{standardize, Dataset};
use crate::error::{GrilError, Result};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::solver::WeightScheme;
use crate::tuning::{select, Selector, TuningConfig, DEFAULT_LAMBDA2_GRID};

/// Share of failed replications above which a method aborts the run.
pub const MAX_FAILURE_RATE: f64 = 0.05;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha stream for `(master, keys...)`.
pub fn keyed_rng(master: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut state = master;
    for &k in keys {
        state = splitmix(&mut state) ^ k.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub fn keyed_seed(master: u64, keys: &[u64]) -> u64 {
    use rand::RngCore;
    keyed_rng(master, keys).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Lasso,
    AdaLasso,
    Enet,
    AdaEnet,
    Slasso,
    AdaSlasso,
    Cnet,
    AdaCnet,
    Wfusion,
    AdaWfusion,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Lasso,
        Method::AdaLasso,
        Method::Enet,
        Method::AdaEnet,
        Method::Slasso,
        Method::AdaSlasso,
        Method::Cnet,
        Method::AdaCnet,
        Method::Wfusion,
        Method::AdaWfusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "Lasso",
            Method::AdaLasso => "AdaLasso",
            Method::Enet => "Enet",
            Method::AdaEnet => "AdaEnet",
            Method::Slasso => "Slasso",
            Method::AdaSlasso => "AdaSlasso",
            Method::Cnet => "Cnet",
            Method::AdaCnet => "AdaCnet",
            Method::Wfusion => "Wfusion",
            Method::AdaWfusion => "AdaWfusion",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            Method::AdaLasso | Method::AdaEnet | Method::AdaSlasso | Method::AdaCnet | Method::AdaWfusion
        )
    }

    /// Non-adaptive counterpart (itself for non-adaptive methods).
    pub fn base(self) -> Method {
        match self {
            Method::AdaLasso => Method::Lasso,
            Method::AdaEnet => Method::Enet,
            Method::AdaSlasso => Method::Slasso,
            Method::AdaCnet => Method::Cnet,
            Method::AdaWfusion => Method::Wfusion,
            m => m,
        }
    }

    pub fn adaptive(self) -> Method {
        match self {
            Method::Lasso => Method::AdaLasso,
            Method::Enet => Method::AdaEnet,
            Method::Slasso => Method::AdaSlasso,
            Method::Cnet => Method::AdaCnet,
            Method::Wfusion => Method::AdaWfusion,
            m => m,
        }
    }

    pub fn penalty(self, gamma_wf: f64) -> PenaltySpec {
        PenaltySpec::new(match self.base() {
            Method::Lasso | Method::Enet => PenaltyKind::Identity,
            Method::Slasso => PenaltyKind::SLasso,
            Method::Cnet => PenaltyKind::Cnet,
            _ => PenaltyKind::WFusion { gamma_wf },
        })
    }

    /// The lasso pair has no ridge term.
    pub fn uses_lambda2(self) -> bool {
        self.base() != Method::Lasso
    }

    fn index(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).expect("listed") as u64
    }
}

impl std::str::FromStr for Method {
    type Err = GrilError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().to_ascii_lowercase() == t)
            .ok_or_else(|| GrilError::Parse(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub sigma: f64,
    pub rho: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub selector: Selector,
    pub lambda2_grid: Vec<f64>,
    /// Adaptive exponent; the benchmark uses 3.
    pub gamma_override: Option<f64>,
    pub gamma_wf: f64,
    pub rescale: bool,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            n: 100,
            sigma: 3.0,
            rho: 0.5,
            replications: 100,
            master_seed: 1,
            methods: Method::ALL.to_vec(),
            selector: Selector::Bic,
            lambda2_grid: DEFAULT_LAMBDA2_GRID.to_vec(),
            gamma_override: Some(3.0),
            gamma_wf: 1.0,
            rescale: true,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n < 13 {
            return Err(GrilError::NTooSmall(self.n));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(GrilError::InvalidParameter(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(GrilError::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.replications == 0 {
            return Err(GrilError::InvalidParameter("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(GrilError::InvalidParameter("no methods selected".into()));
        }
        if !(self.gamma_wf > 0.0) {
            return Err(GrilError::InvalidParameter(format!("gamma_wf must be > 0, got {}", self.gamma_wf)));
        }
        self.tuning_config(Method::Enet, 0).validate()
    }

    /// Applies `key=value` lines (blank lines and `#` comments ignored).
    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GrilError::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut d = Self::default();
        d.apply_config_str(text)?;
        Ok(d)
    }

    pub fn from_config_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| GrilError::Parse(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "replications" => self.replications = num(key, value)?,
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "methods" => {
                self.methods = if value.eq_ignore_ascii_case("all") {
                    Method::ALL.to_vec()
                } else {
                    value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
            }
            "selector" => self.selector = value.parse()?,
            "lambda2_grid" => {
                self.lambda2_grid = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "gamma_override" | "gamma" => {
                self.gamma_override = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "gamma_wf" => self.gamma_wf = num(key, value)?,
            "rescale" => self.rescale = num(key, value)?,
            other => return Err(GrilError::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn dims(&self) -> Result<(usize, usize)> {
        dims_from_n(self.n)
    }

    pub fn tuning_config(&self, method: Method, rep: usize) -> TuningConfig {
        TuningConfig {
            lambda2_grid: if method.uses_lambda2() { self.lambda2_grid.clone() } else { vec![0.0] },
            selector: self.selector,
            lambda1_grid_size: None,
            seed: keyed_seed(self.master_seed, &[rep as u64, method.index(), 0x5EED]),
            gamma_override: self.gamma_override,
            weight_scheme: WeightScheme::PowerLaw,
            rescale: self.rescale,
            lars: Default::default(),
        }
    }
}

/// `p = floor(4 sqrt(n)) - 5`, `q = floor(p / 9)`.
pub fn dims_from_n(n: usize) -> Result<(usize, usize)> {
    let p = (4.0 * (n as f64).sqrt()).floor() as i64 - 5;
    if p < 9 {
        return Err(GrilError::NTooSmall(n));
    }
    let p = p as usize;
    Ok((p, p / 9))
}

pub fn beta_star(p: usize, q: usize) -> Result<DVector<f64>> {
    if p < 3 * q {
        return Err(GrilError::LayoutImpossible { p, needed: 3 * q });
    }
    let mut b = DVector::zeros(p);
    for k in 0..q {
        b[k] = (k + 1) as f64;
        b[p - 2 * q + k] = 3.0;
        b[p - q + k] = -((k + 1) as f64);
    }
    Ok(b)
}

/// `R_ij = rho^|i-j|`.
pub fn ar1_correlation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Rows `x ~ N(0, R)` through the Cholesky factor of `R`.
pub fn gaussian_rows(n: usize, r: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let p = r.nrows();
    let l = r
        .clone()
        .cholesky()
        .ok_or_else(|| GrilError::NotPsd(r.clone().symmetric_eigen().eigenvalues.min()))?
        .l();
    let z = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(rng) });
    Ok(z * l.transpose())
}

/// One simulated data set, fully determined by `(master_seed, rep)`.
pub fn generate_replication(design: &SimDesign, rep: usize) -> Result<Dataset> {
    let (p, q) = design.dims()?;
    let beta = beta_star(p, q)?;
    let mut rng = keyed_rng(design.master_seed, &[rep as u64]);
    let x = gaussian_rows(design.n, &ar1_correlation(p, design.rho), &mut rng)?;
    let eps = DVector::from_fn(design.n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let y = &x * &beta + eps * design.sigma;
    Dataset::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepMetrics {
    /// `(b - b*)' R (b - b*)`.
    pub mse_pred: f64,
    pub mse_beta: f64,
    /// Null coefficients estimated as zero.
    pub c: usize,
    /// Nonzero coefficients estimated as zero.
    pub ic: usize,
    /// Estimated support equals the true support.
    pub exact_support: bool,
}

pub fn compute_metrics(beta_hat: &DVector<f64>, beta_star: &DVector<f64>, r: &DMatrix<f64>) -> Result<RepMetrics> {
    let p = beta_star.len();
    if beta_hat.len() != p || r.nrows() != p || r.ncols() != p {
        return Err(GrilError::DimensionMismatch(format!(
            "beta_hat {} / beta_star {p} / R {}x{}",
            beta_hat.len(),
            r.nrows(),
            r.ncols()
        )));
    }
    let d = beta_hat - beta_star;
    let mut c = 0;
    let mut ic = 0;
    let mut exact = true;
    for j in 0..p {
        let zero_hat = beta_hat[j] == 0.0;
        if beta_star[j] == 0.0 {
            c += usize::from(zero_hat);
            exact &= zero_hat;
        } else {
            ic += usize::from(zero_hat);
            exact &= !zero_hat;
        }
    }
    Ok(RepMetrics {
        mse_pred: d.dot(&(r * &d)),
        mse_beta: d.norm_squared(),
        c,
        ic,
        exact_support: exact,
    })
}

/// Median with the midpoint rule for even counts; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub median_mse_pred: f64,
    pub median_mse_beta: f64,
    pub median_c: f64,
    pub median_ic: f64,
    /// Share of replications whose estimated support is exactly the true one.
    pub selection_freq: f64,
    pub replications_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub method: Method,
    pub rep: usize,
    pub metrics: RepMetrics,
    pub lambda1: f64,
    pub lambda2: f64,
    pub kkt: f64,
    pub initial_kkt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub design: SimDesign,
    pub p: usize,
    pub q: usize,
    pub rows: Vec<MetricsRow>,
    pub records: Vec<RepRecord>,
}

impl ExperimentResult {
    pub fn row(&self, m: Method) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == m)
    }
}

/// Tunes and fits one method on one replication; coefficients on the original scale.
pub fn fit_replication(design: &SimDesign, method: Method, rep: usize, data: &Dataset) -> Result<(DVector<f64>, RepRecord)> {
    let (p, q) = design.dims()?;
    let std = standardize(data)?;
    let cfg = design.tuning_config(method, rep);
    let res = select(&std, &method.penalty(design.gamma_wf), &cfg, method.is_adaptive())?;
    let (beta, _) = std.to_original(res.fit.beta.beta());
    let metrics = compute_metrics(&beta, &beta_star(p, q)?, &ar1_correlation(p, design.rho))?;
    Ok((
        beta,
        RepRecord {
            method,
            rep,
            metrics,
            lambda1: res.best_lambda1,
            lambda2: res.best_lambda2,
            kkt: res.fit.kkt_max_violation,
            initial_kkt: res.initial.map(|f| f.kkt_max_violation),
        },
    ))
}

pub fn run_experiment(design: &SimDesign) -> Result<ExperimentResult> {
    design.validate()?;
    let (p, q) = design.dims()?;
    let datasets = (0..design.replications)
        .into_par_iter()
        .map(|rep| generate_replication(design, rep))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(Method, usize)> = design
        .methods
        .iter()
        .flat_map(|&m| (0..design.replications).map(move |r| (m, r)))
        .collect();
    let outcomes: Vec<Result<RepRecord>> = jobs
        .par_iter()
        .map(|&(m, rep)| fit_replication(design, m, rep, &datasets[rep]).map(|(_, rec)| rec))
        .collect();

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &m in &design.methods {
        let mine: Vec<&Result<RepRecord>> = jobs
            .iter()
            .zip(&outcomes)
            .filter(|((jm, _), _)| *jm == m)
            .map(|(_, o)| o)
            .collect();
        let ok: Vec<&RepRecord> = mine.iter().filter_map(|o| o.as_ref().ok()).collect();
        let failed = mine.len() - ok.len();
        if failed as f64 > MAX_FAILURE_RATE * mine.len() as f64 || ok.is_empty() {
            return Err(GrilError::TooManyFailures { failed, total: mine.len() });
        }
        let col = |f: &dyn Fn(&RepMetrics) -> f64| median(&ok.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        rows.push(MetricsRow {
            method: m,
            median_mse_pred: col(&|r| r.mse_pred),
            median_mse_beta: col(&|r| r.mse_beta),
            median_c: col(&|r| r.c as f64),
            median_ic: col(&|r| r.ic as f64),
            selection_freq: ok.iter().filter(|r| r.metrics.exact_support).count() as f64 / ok.len() as f64,
            replications_used: ok.len(),
            failures: failed,
        });
        records.extend(ok.into_iter().cloned());
    }
    Ok(ExperimentResult {
        design: design.clone(),
        p,
        q,
        rows,
        records,
    })
}

fn table_header(out: &mut String, cols: &str) {
    out.push_str("method,n,sigma,rho,");
    out.push_str(cols);
    out.push('\n');
}

fn cell(out: &mut String, res: &ExperimentResult, row: &MetricsRow, vals: &[f64]) {
    let d = &res.design;
    write!(out, "{},{},{:.4},{:.4}", row.method, d.n, d.sigma, d.rho).expect("string write");
    for v in vals {
        write!(out, ",{v:.4}").expect("string write");
    }
    out.push('\n');
}

/// Median prediction error per method.
pub fn table1_csv(res: &ExperimentResult) -> String {
    let mut out = String::new();
    table_header(&mut out, "median_mse");
    res.rows.iter().for_each(|r| cell(&mut out, res, r, &[r.median_mse_pred]));
    out
}

/// Median `||b - b*||^2` per method.
pub fn table2_csv(res: &ExperimentResult) -> String {
    let mut out = String::new();
    table_header(&mut out, "median_mse_beta");
    res.rows.iter().for_each(|r| cell(&mut out, res, r, &[r.median_mse_beta]));
    out
}

/// Median correct and incorrect zero counts per method.
pub fn table3_csv(res: &ExperimentResult) -> String {
    let mut out = String::new();
    table_header(&mut out, "median_c,median_ic,selection_freq");
    res.rows
        .iter()
        .for_each(|r| cell(&mut out, res, r, &[r.median_c, r.median_ic, r.selection_freq]));
    out
}

/// One line per (method, replication) at full precision.
pub fn replicates_csv(res: &ExperimentResult) -> String {
    let mut out = String::from("method,rep,mse_pred,mse_beta,c,ic,exact_support,lambda1,lambda2,kkt\n");
    for r in &res.records {
        writeln!(
            out,
            "{},{},{:e},{:e},{},{},{},{:e},{:e},{:e}",
            r.method,
            r.rep,
            r.metrics.mse_pred,
            r.metrics.mse_beta,
            r.metrics.c,
            r.metrics.ic,
            u8::from(r.metrics.exact_support),
            r.lambda1,
            r.lambda2,
            r.kkt
        )
        .expect("string write");
    }
    out
}

/// Writes `table1.csv`, `table2.csv`, `table3.csv` and `replicates.csv` into `dir`.
pub fn write_tables(res: &ExperimentResult, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = [
        ("table1.csv", table1_csv(res)),
        ("table2.csv", table2_csv(res)),
        ("table3.csv", table3_csv(res)),
        ("replicates.csv", replicates_csv(res)),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_examples() {
        assert_eq!(dims_from_n(100).unwrap(), (35, 3));
        assert_eq!(dims_from_n(200).unwrap(), (51, 5));
        assert_eq!(dims_from_n(1000).unwrap(), (121, 13));
        assert_eq!(dims_from_n(13).unwrap(), (9, 1));
        assert!(matches!(dims_from_n(12), Err(GrilError::NTooSmall(12))));
    }

    #[test]
    fn beta_layout() {
        let b = beta_star(35, 3).unwrap();
        let mut expect = vec![1.0, 2.0, 3.0];
        expect.extend(std::iter::repeat(0.0).take(26));
        expect.extend([3.0, 3.0, 3.0, -1.0, -2.0, -3.0]);
        assert_eq!(b.as_slice(), expect.as_slice());
        let b = beta_star(9, 1).unwrap();
        assert_eq!(b.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, -1.0]);
        for n in [13, 100, 200, 1000] {
            let (p, q) = dims_from_n(n).unwrap();
            assert_eq!(beta_star(p, q).unwrap().iter().filter(|v| **v != 0.0).count(), 3 * q);
        }
        assert!(matches!(beta_star(5, 2), Err(GrilError::LayoutImpossible { .. })));
    }

    #[test]
    fn metrics_extremes() {
        let b = beta_star(35, 3).unwrap();
        let r = ar1_correlation(35, 0.5);
        let m = compute_metrics(&b, &b, &r).unwrap();
        assert_eq!((m.mse_pred, m.mse_beta, m.c, m.ic), (0.0, 0.0, 26, 0));
        assert!(m.exact_support);
        let z = DVector::zeros(35);
        let m = compute_metrics(&z, &b, &r).unwrap();
        assert_eq!(m.mse_beta, b.norm_squared());
        assert_eq!((m.c, m.ic), (26, 9));
        assert!(compute_metrics(&DVector::zeros(3), &b, &r).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn independent_design_has_small_correlations() {
        let d = SimDesign { n: 10_000, rho: 0.0, ..Default::default() };
        let data = generate_replication(&d, 0).unwrap();
        let c = crate::penalty::correlation_matrix(data.x()).unwrap();
        let off = (0..c.nrows())
            .flat_map(|i| (0..c.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| c[(i, j)].abs())
            .fold(0.0, f64::max);
        assert!(off < 0.1, "{off}");
    }

    #[test]
    fn row_covariance_matches_ar1() {
        let r = ar1_correlation(6, 0.75);
        let mut rng = keyed_rng(5, &[1]);
        let x = gaussian_rows(100_000, &r, &mut rng).unwrap();
        let cov = x.tr_mul(&x) / 100_000.0;
        assert!((cov - r).amax() < 0.02);
    }

    #[test]
    fn replication_is_deterministic() {
        let d = SimDesign::default();
        assert_eq!(generate_replication(&d, 3).unwrap(), generate_replication(&d, 3).unwrap());
        assert_ne!(generate_replication(&d, 3).unwrap(), generate_replication(&d, 4).unwrap());
    }

    #[test]
    fn config_parsing() {
        let d = SimDesign::from_config_str(
            "# benchmark cell\nn = 200\nsigma=6\nrho=0.75\nreplications=7\nmaster_seed=9\nmethods=lasso,AdaCnet\nselector=cv5\nlambda2_grid=0,1\ngamma_override=none\n",
        )
        .unwrap();
        assert_eq!(d.n, 200);
        assert_eq!(d.sigma, 6.0);
        assert_eq!(d.methods, vec![Method::Lasso, Method::AdaCnet]);
        assert_eq!(d.selector, Selector::KFold { k: 5 });
        assert_eq!(d.lambda2_grid, vec![0.0, 1.0]);
        assert_eq!(d.gamma_override, None);
        assert!(SimDesign::from_config_str("bogus=1").is_err());
        assert!(SimDesign::from_config_str("n").is_err());
        assert!(SimDesign::from_config_str("methods=ridge").is_err());
    }

    #[test]
    fn tiny_experiment_is_deterministic() {
        let d = SimDesign {
            methods: vec![Method::Lasso, Method::AdaLasso],
            replications: 3,
            ..Default::default()
        };
        let a = run_experiment(&d).unwrap();
        let b = run_experiment(&d).unwrap();
        assert_eq!(table1_csv(&a), table1_csv(&b));
        assert_eq!(a.rows.len(), 2);
        assert_eq!(table1_csv(&a).lines().count(), 3);
        for r in &a.records {
            assert!(r.kkt <= crate::solver::KKT_TOL);
            assert!(r.initial_kkt.map_or(true, |k| k <= crate::solver::KKT_TOL));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.adaptive().base(), m.base());
        }
    }
}
