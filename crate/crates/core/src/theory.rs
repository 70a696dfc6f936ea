//! Finite-sample checks of the estimator's theoretical guarantees.
//!
//! * grouping bound for the adaptive correlation-penalized fit on
//!   equi-correlated designs,
//! * the mean-squared-error bound `4 (l2^2 D^2 |b*|^2 + B p n s^2 + l1^2 E sum w^2) / (b n + l2 d)^2`,
//! * the sparsity inequalities under the restricted eigenvalue condition,
//! * estimates of the restricted eigenvalue constant itself.
//!
//! Every check returns one [`CheckRow`] per replication so results can be
//! written as CSV and summarized.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{CoefficientVector, Dataset};
use crate::error::{GrilError, Result};
use crate::penalty::{cnet_from_correlations, PenaltyKind, PenaltyMatrix, PenaltySpec};
use crate::sim::{ar1_correlation, beta_star, dims_from_n, gaussian_rows, keyed_rng, keyed_seed};
use crate::solver::{adagril_fit, gril_fit, make_weights, WeightScheme};

/// Slack below which a bound counts as violated.
pub const BOUND_TOL: f64 = 1e-8;
/// Tolerance for "all pairwise correlations equal".
pub const EQUI_TOL: f64 = 1e-8;
pub const RE_SAMPLES: usize = 100_000;
/// Largest `p` for which [`re_constant_exact`] enumerates faces.
pub const RE_EXACT_MAX_P: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    /// Extreme eigenvalues of `X'X / n`.
    pub b: f64,
    pub big_b: f64,
    /// Extreme eigenvalues of `Q`; `d` is clamped at 0.
    pub d: f64,
    pub big_d: f64,
}

impl SpectralBounds {
    pub fn compute(x: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let gx = (x.tr_mul(x) / n).symmetric_eigen().eigenvalues;
        let gq = q.clone().symmetric_eigen().eigenvalues;
        Self {
            b: gx.min().max(0.0),
            big_b: gx.max(),
            d: gq.min().max(0.0),
            big_d: gq.max().max(0.0),
        }
    }

    /// Smallest box containing both.
    pub fn union(self, o: Self) -> Self {
        Self {
            b: self.b.min(o.b),
            big_b: self.big_b.max(o.big_b),
            d: self.d.min(o.d),
            big_d: self.big_d.max(o.big_d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub replicate: usize,
    pub seed: u64,
    pub quantity: f64,
    pub bound: f64,
    pub slack: f64,
    pub in_regime: bool,
}

impl CheckRow {
    fn new(check: &str, replicate: usize, seed: u64, quantity: f64, bound: f64, in_regime: bool) -> Self {
        Self {
            check: check.to_string(),
            replicate,
            seed,
            quantity,
            bound,
            slack: bound - quantity,
            in_regime,
        }
    }

    pub fn violated(&self) -> bool {
        self.in_regime && self.slack < -BOUND_TOL
    }
}

pub fn report_csv(rows: &[CheckRow]) -> String {
    let mut out = String::from("check,replicate,seed,quantity,bound,slack,in_regime\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{}",
            r.check,
            r.replicate,
            r.seed,
            r.quantity,
            r.bound,
            r.slack,
            u8::from(r.in_regime)
        )
        .expect("string write");
    }
    out
}

pub fn write_report(rows: &[CheckRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report_csv(rows))?;
    Ok(())
}

/// One line per check name: rows, in-regime rows, violations, minimum slack.
pub fn summary(rows: &[CheckRow]) -> String {
    let mut names: Vec<&str> = rows.iter().map(|r| r.check.as_str()).collect();
    names.dedup();
    names.sort();
    names.dedup();
    let mut out = String::new();
    for name in names {
        let mine: Vec<&CheckRow> = rows.iter().filter(|r| r.check == name).collect();
        let in_regime: Vec<&&CheckRow> = mine.iter().filter(|r| r.in_regime).collect();
        let violations = in_regime.iter().filter(|r| r.violated()).count();
        let min_slack = in_regime.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "{name}: rows={} in_regime={} violations={violations} min_slack={min_slack:e}",
            mine.len(),
            in_regime.len()
        )
        .expect("string write");
        for r in in_regime.iter().filter(|r| r.violated()) {
            writeln!(out, "  violation replicate={} seed={} slack={:e}", r.replicate, r.seed, r.slack)
                .expect("string write");
        }
    }
    out
}

// ---------------------------------------------------------------- grouping

/// Centered `n x p` design with unit-norm columns whose pairwise
/// correlations all equal `rho` exactly.
pub fn equicorrelated_design(n: usize, p: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if n < p + 1 {
        return Err(GrilError::TooSmall { n, p });
    }
    let lo = -1.0 / (p as f64 - 1.0).max(1.0);
    if !(rho > lo && rho < 1.0) {
        return Err(GrilError::InvalidParameter(format!("rho={rho} gives a singular correlation matrix")));
    }
    let mut g = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(rng) });
    for mut col in g.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let u = g.qr().q();
    let r = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
    let l = r.cholesky().expect("equicorrelation matrix is positive definite").l();
    Ok(u * l.transpose())
}

/// Common pairwise correlation of a standardized design.
pub fn common_correlation(x: &DMatrix<f64>) -> Result<f64> {
    let c = x.tr_mul(x);
    let p = c.nrows();
    if p < 2 {
        return Err(GrilError::NotEquiCorrelated(0.0));
    }
    let rho = c[(0, 1)];
    let mut worst = 0.0f64;
    for i in 0..p {
        worst = worst.max((c[(i, i)] - 1.0).abs());
        for j in 0..p {
            if i != j {
                worst = worst.max((c[(i, j)] - rho).abs());
            }
        }
    }
    if worst > EQUI_TOL {
        return Err(GrilError::NotEquiCorrelated(worst));
    }
    Ok(rho)
}

/// Right-hand side of the grouping bound for a pair with initial
/// coefficients `b0_i`, `b0_j`. With `gamma = 0` the weight term vanishes.
pub fn grouping_rhs(rho: f64, p: usize, lambda2: f64, gamma: f64, lambda1_star: f64, y_norm: f64, b0_i: f64, b0_j: f64) -> f64 {
    let lead = (1.0 - rho * rho) / (2.0 * (p as f64 + rho - 1.0) * lambda2);
    let base = (2.0 * (1.0 - rho)).sqrt();
    if gamma == 0.0 {
        return lead * base;
    }
    let m = b0_i.abs().min(b0_j.abs());
    if m == 0.0 {
        return f64::INFINITY;
    }
    lead * (base + gamma * lambda1_star * (b0_i - b0_j).abs() / (y_norm * m.powf(gamma + 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSlack {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingReport {
    pub rho: f64,
    pub pairs: Vec<PairSlack>,
}

impl GroupingReport {
    pub fn min_slack(&self) -> f64 {
        self.pairs.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `|b_j - b_i| / ||y|| <= rhs` for every same-sign pair of `beta`,
/// the minimizer of the weighted objective (before any rescaling).
pub fn grouping_bound_check(
    data: &Dataset,
    beta: &CoefficientVector,
    initial: &CoefficientVector,
    gamma: f64,
    lambda1_star: f64,
    lambda2: f64,
) -> Result<GroupingReport> {
    if !(lambda2 > 0.0) {
        return Err(GrilError::InvalidParameter(format!("lambda2 must be positive, got {lambda2}")));
    }
    let rho = common_correlation(data.x())?;
    let b = beta.beta();
    let b0 = initial.beta();
    let y_norm = data.y().norm();
    let p = data.p();
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if b[i] * b[j] > 0.0 {
                let lhs = (b[j] - b[i]).abs() / y_norm;
                let rhs = grouping_rhs(rho, p, lambda2, gamma, lambda1_star, y_norm, b0[i], b0[j]);
                pairs.push(PairSlack { i, j, lhs, rhs, slack: rhs - lhs });
            }
        }
    }
    Ok(GroupingReport { rho, pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingInstance {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda1_star: f64,
    pub lambda2: f64,
}

/// Random equi-correlated data, a unit-weight correlation-penalized fit,
/// power-law weights from it and the weighted refit; returns the pair report.
pub fn grouping_instance(inst: &GroupingInstance, rng: &mut ChaCha8Rng) -> Result<GroupingReport> {
    let x = equicorrelated_design(inst.n, inst.p, inst.rho, rng)?;
    let beta: DVector<f64> = DVector::from_fn(inst.p, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        2.0 * v
    });
    let noise = DVector::from_fn(inst.n, |_, _| -> f64 { StandardNormal.sample(rng) });
    let mut y = &x * beta + noise;
    let m = y.mean();
    y.add_scalar_mut(-m);
    let data = Dataset::new(x, y)?;
    let q = cnet_from_correlations(&data.x().tr_mul(data.x()))?;
    let initial = gril_fit(&data, &q, inst.lambda1, inst.lambda2)?;
    let w = make_weights(&initial.inner, inst.gamma, WeightScheme::PowerLaw, inst.n)?;
    let fit = adagril_fit(&data, &q, inst.lambda1_star, inst.lambda2, &w, false)?;
    grouping_bound_check(&data, &fit.inner, &initial.inner, inst.gamma, inst.lambda1_star, inst.lambda2)
}

/// `count` seeded instances cycling through `rho` in {0.3, 0.7, 0.95},
/// `p` in {5, 10} and `gamma` in {0, 1, 2, 3}; one row per instance with the
/// smallest pair slack (instances without same-sign pairs report slack inf).
pub fn grouping_check(count: usize, seed: u64) -> Result<Vec<CheckRow>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = keyed_rng(seed, &[k as u64]);
            let rho = [0.3, 0.7, 0.95][k % 3];
            let p = [5, 10][(k / 3) % 2];
            let gamma = [0.0, 1.0, 2.0, 3.0][(k / 6) % 4];
            let lambda2 = 10f64.powf(rng.random_range(-2.0..1.0));
            let inst = GroupingInstance {
                n: 40,
                p,
                rho,
                gamma,
                lambda1: rng.random_range(0.05..1.0),
                lambda1_star: rng.random_range(0.05..1.0),
                lambda2,
            };
            let rep = grouping_instance(&inst, &mut rng)?;
            let (lhs, rhs) = rep
                .pairs
                .iter()
                .min_by(|a, b| a.slack.total_cmp(&b.slack))
                .map_or((0.0, f64::INFINITY), |p| (p.lhs, p.rhs));
            Ok(CheckRow::new("grouping", k, seed, lhs, rhs, true))
        })
        .collect()
}

// ---------------------------------------------------------- mean sparsity

/// `4 (l2^2 D^2 |b*|^2 + B p n sigma^2 + l1^2 E[sum w^2]) / (b n + l2 d)^2`.
/// Pass `mean_sum_w2 = p` for unit weights.
pub fn mean_sparsity_bound(
    bounds: &SpectralBounds,
    n: usize,
    p: usize,
    lambda1_star: f64,
    lambda2: f64,
    mean_sum_w2: f64,
    sigma: f64,
    beta_star_norm2: f64,
) -> f64 {
    let (n, p) = (n as f64, p as f64);
    let num = lambda2 * lambda2 * bounds.big_d * bounds.big_d * beta_star_norm2
        + bounds.big_b * p * n * sigma * sigma
        + lambda1_star * lambda1_star * mean_sum_w2;
    4.0 * num / (bounds.b * n + lambda2 * bounds.d).powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskBoundSetup {
    pub n: usize,
    pub sigma: f64,
    pub rho: f64,
    pub replications: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub penalty: PenaltySpec,
}

impl RiskBoundSetup {
    /// The benchmark design at `n = 100`, `sigma = 3`, ridge penalty.
    pub fn standard(seed: u64) -> Self {
        Self {
            n: 100,
            sigma: 3.0,
            rho: 0.5,
            replications: 200,
            seed,
            lambda1: 50.0,
            lambda2: 1.0,
            penalty: PenaltySpec::new(PenaltyKind::Identity),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskBoundReport {
    pub mean_sq_error: f64,
    pub bound: f64,
    pub bounds: SpectralBounds,
    pub rows: Vec<CheckRow>,
}

/// Monte-Carlo mean of `||b_hat - b*||^2` for the unit-weight fit on the
/// raw benchmark design; the spectral constants are the extremes over all
/// replications so one bound covers every draw.
pub fn risk_bound_check(setup: &RiskBoundSetup) -> Result<RiskBoundReport> {
    let (p, q) = dims_from_n(setup.n)?;
    let bstar = beta_star(p, q)?;
    let r = ar1_correlation(p, setup.rho);
    let per_rep = (0..setup.replications)
        .into_par_iter()
        .map(|k| -> Result<(f64, SpectralBounds)> {
            let mut rng = keyed_rng(setup.seed, &[k as u64]);
            let x = gaussian_rows(setup.n, &r, &mut rng)?;
            let eps = DVector::from_fn(setup.n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let y = &x * &bstar + eps * setup.sigma;
            let pm = setup.penalty.build_for_matrix(&x)?;
            let bounds = SpectralBounds::compute(&x, pm.q());
            let data = Dataset::new(x, y)?;
            let fit = gril_fit(&data, &pm, setup.lambda1, setup.lambda2)?;
            Ok(((fit.inner.beta() - &bstar).norm_squared(), bounds))
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds = per_rep
        .iter()
        .map(|(_, b)| *b)
        .reduce(SpectralBounds::union)
        .ok_or_else(|| GrilError::InvalidParameter("no replications".into()))?;
    let bound = mean_sparsity_bound(&bounds, setup.n, p, setup.lambda1, setup.lambda2, p as f64, setup.sigma, bstar.norm_squared());
    let mean = per_rep.iter().map(|(e, _)| e).sum::<f64>() / per_rep.len() as f64;
    let mut rows: Vec<CheckRow> = per_rep
        .iter()
        .enumerate()
        .map(|(k, (e, _))| CheckRow::new("risk_rep", k, setup.seed, *e, bound, false))
        .collect();
    rows.push(CheckRow::new("risk_mean", setup.replications, setup.seed, mean, bound, true));
    Ok(RiskBoundReport {
        mean_sq_error: mean,
        bound,
        bounds,
        rows,
    })
}

// --------------------------------------------------- restricted eigenvalue

/// Cone constant `4 max(2 / eta, 1)`.
pub fn cone_constant(eta: f64) -> f64 {
    4.0 * (2.0 / eta).max(1.0)
}

fn in_cone(z: &DVector<f64>, in_support: &[bool], c: f64) -> bool {
    let (mut on, mut off) = (0.0, 0.0);
    for (v, s) in z.iter().zip(in_support) {
        if *s {
            on += v.abs();
        } else {
            off += v.abs();
        }
    }
    on > 0.0 && off <= c * on * (1.0 + 1e-9) + 1e-300
}

fn support_mask(p: usize, support: &[usize]) -> Result<Vec<bool>> {
    if support.is_empty() {
        return Err(GrilError::SupportEmpty);
    }
    let mut mask = vec![false; p];
    for &j in support {
        if j >= p {
            return Err(GrilError::DimensionMismatch(format!("support index {j} >= p={p}")));
        }
        mask[j] = true;
    }
    Ok(mask)
}

fn ratio(k: &DMatrix<f64>, z: &DVector<f64>, mask: &[bool]) -> f64 {
    let den: f64 = z.iter().zip(mask).filter(|(_, s)| **s).map(|(v, _)| v * v).sum();
    z.dot(&(k * z)) / den
}

/// Minimum of `z'Kz / sum_{j in A} z_j^2` over `samples` random cone members
/// plus every support coordinate direction. This is an upper bound on the
/// true constant.
pub fn re_constant_sampled(k: &DMatrix<f64>, support: &[usize], eta: f64, samples: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = k.nrows();
    let mask = support_mask(p, support)?;
    let c = cone_constant(eta);
    let mut best = support.iter().map(|&j| k[(j, j)]).fold(f64::INFINITY, f64::min);
    let mut z = DVector::zeros(p);
    for _ in 0..samples {
        let mut on = 0.0;
        for j in 0..p {
            let keep = rng.random_bool(0.7);
            let v: f64 = StandardNormal.sample(rng);
            z[j] = if keep { v } else { 0.0 };
            if mask[j] {
                on += z[j].abs();
            }
        }
        if on == 0.0 {
            let j = support[rng.random_range(0..support.len())];
            z[j] = 1.0;
            on = 1.0;
        }
        let off: f64 = (0..p).filter(|&j| !mask[j]).map(|j| z[j].abs()).sum();
        if off > 0.0 {
            let u = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>() };
            let scale = u * c * on / off;
            (0..p).filter(|&j| !mask[j]).for_each(|j| z[j] *= scale);
        }
        best = best.min(ratio(k, &z, &mask));
    }
    Ok(best)
}

fn null_space(c: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    if c.nrows() == 0 {
        return DMatrix::identity(p, p);
    }
    // Pad to at least p rows so the SVD returns a full right basis.
    let mut padded = DMatrix::zeros(c.nrows().max(p), p);
    padded.rows_mut(0, c.nrows()).copy_from(c);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..p)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax.max(1.0))
        .collect();
    DMatrix::from_fn(p, cols.len(), |r, s| vt[(cols[s], r)])
}

/// Exact constant for `p <= 6` and positive definite `K`: the minimum over
/// the cone is a stationary point on some face, so every sign pattern and
/// every set of active face constraints is enumerated and the generalized
/// eigenvectors on each face are tested for cone membership.
pub fn re_constant_exact(k: &DMatrix<f64>, support: &[usize], eta: f64) -> Result<f64> {
    let p = k.nrows();
    if p > RE_EXACT_MAX_P {
        return Err(GrilError::InvalidParameter(format!("exact constant needs p <= {RE_EXACT_MAX_P}, got {p}")));
    }
    let mask = support_mask(p, support)?;
    if k.clone().cholesky().is_none() {
        return Err(GrilError::NotPsd(k.clone().symmetric_eigen().eigenvalues.min()));
    }
    let c = cone_constant(eta);
    let e = DMatrix::from_fn(p, p, |i, j| if i == j && mask[i] { 1.0 } else { 0.0 });
    let mut best = f64::INFINITY;
    for signs in 0u32..(1 << p) {
        let s: Vec<f64> = (0..p).map(|j| if signs >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(p + 1);
        rows.push(DVector::from_fn(p, |j, _| if mask[j] { -c * s[j] } else { s[j] }));
        for j in 0..p {
            rows.push(DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 }));
        }
        for subset in 0u32..(1 << (p + 1)) {
            let chosen: Vec<&DVector<f64>> = (0..=p).filter(|&r| subset >> r & 1 == 1).map(|r| &rows[r]).collect();
            let cm = DMatrix::from_fn(chosen.len(), p, |r, j| chosen[r][j]);
            let v = null_space(&cm, p);
            if v.ncols() == 0 {
                continue;
            }
            let m = v.tr_mul(&(k * &v));
            let eig = m.symmetric_eigen();
            let inv_sqrt = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
                * eig.eigenvectors.transpose();
            let t = &inv_sqrt * v.tr_mul(&(&e * &v)) * &inv_sqrt;
            let te = t.symmetric_eigen();
            for (idx, &lam) in te.eigenvalues.iter().enumerate() {
                if lam <= 1e-12 {
                    continue;
                }
                let z = &v * (&inv_sqrt * te.eigenvectors.column(idx));
                if in_cone(&z, &mask, c) {
                    best = best.min(ratio(k, &z, &mask));
                }
            }
        }
    }
    Ok(best)
}

/// Sampled constant for `K = X'X + lambda2 Q`.
pub fn re_constant(x: &DMatrix<f64>, q: &PenaltyMatrix, lambda2: f64, support: &[usize], eta: f64, seed: u64) -> Result<f64> {
    let k = x.tr_mul(x) + q.q() * lambda2;
    re_constant_sampled(&k, support, eta, RE_SAMPLES, &mut keyed_rng(seed, &[0x8E]))
}

/// Seeded small instances comparing the sampled estimate with the exact
/// constant; quantity = exact, bound = sampled, so slack >= 0 always and the
/// relative gap is `slack / exact`.
pub fn re_check(count: usize, seed: u64) -> Result<Vec<CheckRow>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = keyed_rng(seed, &[k as u64]);
            let p = 3 + k % 4;
            let n = 2 * p + 4;
            let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let support: Vec<usize> = (0..1 + k % 2).collect();
            let eta = rng.random_range(0.5..3.0);
            let kmat = x.tr_mul(&x) / n as f64;
            let exact = re_constant_exact(&kmat, &support, eta)?;
            let sampled = re_constant_sampled(&kmat, &support, eta, RE_SAMPLES, &mut rng)?;
            Ok(CheckRow::new("re", k, seed, exact, sampled, true))
        })
        .collect()
}

// ------------------------------------------------------ sparsity inequality

/// `lambda1* = 8 sqrt(2) sigma sqrt(log(p / phi) / n)` and
/// `lambda2 = lambda1* / (8 ||Q b*||_inf)`.
pub fn sparsity_tuning(n: usize, p: usize, sigma: f64, varphi: f64, q: &DMatrix<f64>, beta_star: &DVector<f64>) -> Result<(f64, f64)> {
    if !(varphi > 0.0 && varphi < 1.0) {
        return Err(GrilError::InvalidParameter(format!("varphi must be in (0, 1), got {varphi}")));
    }
    let l1 = 8.0 * 2f64.sqrt() * sigma * ((p as f64 / varphi).ln() / n as f64).sqrt();
    let qb = (q * beta_star).amax();
    if qb == 0.0 {
        return Err(GrilError::ZeroQBeta);
    }
    Ok((l1, l1 / (8.0 * qb)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsitySetup {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub eta: f64,
    pub sigma: f64,
    pub varphi: f64,
    pub theta: f64,
    pub penalty: PenaltySpec,
    /// Stop after this many in-regime replications.
    pub in_regime_target: usize,
    pub max_replications: usize,
    pub seed: u64,
    pub re_samples: usize,
}

impl SparsitySetup {
    pub fn standard(seed: u64) -> Self {
        Self {
            n: 50,
            p: 10,
            s: 2,
            eta: 20.0,
            sigma: 0.05,
            varphi: 0.1,
            theta: 0.25,
            penalty: PenaltySpec::new(PenaltyKind::Identity),
            in_regime_target: 200,
            max_replications: 1000,
            seed,
            re_samples: 20_000,
        }
    }

    pub fn beta_star(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| if j < self.s { if j % 2 == 0 { self.eta } else { -self.eta } } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub lambda1_star: f64,
    pub lambda2: f64,
    pub replications: usize,
    pub in_regime: usize,
    /// Replications where the noise event held.
    pub gamma_hits: usize,
    /// Replications checked: in regime and inside the noise event.
    pub checked: usize,
    pub violations: usize,
    pub rows: Vec<CheckRow>,
}

impl SparsityReport {
    pub fn gamma_frequency(&self) -> f64 {
        self.gamma_hits as f64 / self.replications as f64
    }
}

/// Sparsity inequalities for the adaptive fit with capped inverse weights.
///
/// The bounds are evaluated for the per-observation objective
/// `(1/n)||y - Xb||^2 + lambda2 b'Qb + lambda1* sum w_j |b_j|`, i.e. the
/// solver runs at `(n lambda1*, n lambda2)`; the prediction term is then
/// `(1/n)||X(b* - b)||^2` and the restricted eigenvalue matrix is
/// `X'X / n + lambda2 Q`, matching the noise event built from
/// `U_j = n^-1 sum_i x_ij eps_i`. The initial fit uses the same pair.
pub fn sparsity_inequality_check(setup: &SparsitySetup) -> Result<SparsityReport> {
    let bstar = setup.beta_star();
    let support: Vec<usize> = (0..setup.p).filter(|&j| bstar[j] != 0.0).collect();
    let factor = (2.0 / setup.eta).max(1.0).powi(2) * setup.s as f64;
    let mut rows = Vec::new();
    let (mut reps, mut in_regime, mut hits, mut checked, mut violations) = (0, 0, 0, 0, 0);
    let (mut l1_first, mut l2_first) = (f64::NAN, f64::NAN);
    let batch = 50;
    while in_regime < setup.in_regime_target && reps < setup.max_replications {
        let todo: Vec<usize> = (reps..(reps + batch).min(setup.max_replications)).collect();
        let results = todo
            .par_iter()
            .map(|&k| sparsity_replication(setup, &bstar, &support, factor, k))
            .collect::<Result<Vec<_>>>()?;
        for (k, r) in todo.iter().zip(results) {
            reps += 1;
            if reps == 1 {
                l1_first = r.lambda1;
                l2_first = r.lambda2;
            }
            hits += usize::from(r.gamma);
            if r.in_regime && in_regime < setup.in_regime_target {
                in_regime += 1;
                if r.gamma {
                    checked += 1;
                    let bad = r.rows.iter().filter(|row| row.violated()).count();
                    violations += usize::from(bad > 0);
                }
            }
            let _ = k;
            rows.extend(r.rows);
        }
    }
    Ok(SparsityReport {
        lambda1_star: l1_first,
        lambda2: l2_first,
        replications: reps,
        in_regime,
        gamma_hits: hits,
        checked,
        violations,
        rows,
    })
}

struct SparsityRep {
    lambda1: f64,
    lambda2: f64,
    gamma: bool,
    in_regime: bool,
    rows: Vec<CheckRow>,
}

fn sparsity_replication(setup: &SparsitySetup, bstar: &DVector<f64>, support: &[usize], factor: f64, k: usize) -> Result<SparsityRep> {
    let (n, p) = (setup.n, setup.p);
    let seed = keyed_seed(setup.seed, &[k as u64]);
    let mut rng = keyed_rng(setup.seed, &[k as u64]);
    let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let eps = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) }) * setup.sigma;
    let y = &x * bstar + &eps;
    let pm = setup.penalty.build_for_matrix(&x)?;
    let (l1, l2) = sparsity_tuning(n, p, setup.sigma, setup.varphi, pm.q(), bstar)?;
    let nf = n as f64;

    let u = x.tr_mul(&eps) / nf;
    let gamma = 2.0 * u.amax() <= setup.theta * l1;

    let k_mat = x.tr_mul(&x) / nf + pm.q() * l2;
    let psi = re_constant_sampled(&k_mat, support, setup.eta, setup.re_samples, &mut rng)?;
    let delta = 8.0 * l1 * setup.s as f64 / psi;
    let in_regime = setup.eta >= 2.0 * delta;

    let data = Dataset::new(x, y)?;
    let initial = gril_fit(&data, &pm, nf * l1, nf * l2)?;
    let w = make_weights(&initial.inner, 0.0, WeightScheme::CappedInverse, n)?;
    let fit = adagril_fit(&data, &pm, nf * l1, nf * l2, &w, false)?;
    let d = bstar - fit.inner.beta();
    let pred = (data.x() * &d).norm_squared() / nf;
    let l1_err = d.lp_norm(1);
    let active = in_regime && gamma;
    Ok(SparsityRep {
        lambda1: l1,
        lambda2: l2,
        gamma,
        in_regime,
        rows: vec![
            CheckRow::new("sparsity_pred", k, seed, pred, 4.0 * l1 * l1 * factor / psi, active),
            CheckRow::new("sparsity_l1", k, seed, l1_err, 8.0 * l1 * factor / psi, active),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::build_identity;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn spectral_bounds_sandwich() {
        let mut r = rng(1);
        let x = DMatrix::from_fn(30, 5, |_, _| -> f64 { StandardNormal.sample(&mut r) });
        let sb = SpectralBounds::compute(&x, &DMatrix::identity(5, 5));
        let g = x.tr_mul(&x) / 30.0;
        for _ in 0..100 {
            let v: DVector<f64> = DVector::from_fn(5, |_, _| StandardNormal.sample(&mut r));
            let quad = v.dot(&(&g * &v));
            let vv = v.norm_squared();
            assert!(quad >= sb.b * vv - 1e-8 && quad <= sb.big_b * vv + 1e-8);
        }
        assert_eq!((sb.d, sb.big_d), (1.0, 1.0));
        assert!(sb.b <= sb.big_b);
    }

    #[test]
    fn equicorrelated_design_is_exact() {
        let x = equicorrelated_design(30, 5, 0.7, &mut rng(2)).unwrap();
        assert!((common_correlation(&x).unwrap() - 0.7).abs() < 1e-12);
        for col in x.column_iter() {
            assert!(col.sum().abs() < 1e-12);
        }
        let mut r = rng(3);
        let bad = DMatrix::from_fn(30, 4, |_, _| -> f64 { StandardNormal.sample(&mut r) });
        assert!(matches!(common_correlation(&bad), Err(GrilError::NotEquiCorrelated(_))));
    }

    #[test]
    fn unit_weight_grouping_rhs() {
        let v = grouping_rhs(0.5, 5, 2.0, 0.0, 1.0, 3.0, 0.1, 0.2);
        let expect = (1.0 - 0.25) * (2.0f64 * 0.5).sqrt() / (2.0 * 4.5 * 2.0);
        assert!((v - expect).abs() < 1e-15);
        let lead = (1.0 - 0.9801) / (2.0 * (5.0 - 0.01) * 1.0);
        let v = grouping_rhs(0.99, 5, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0);
        assert!((v - lead * (0.02f64).sqrt()).abs() < 1e-15);
        assert_eq!(grouping_rhs(0.5, 5, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn grouping_holds_on_small_batch() {
        let rows = grouping_check(12, 5).unwrap();
        assert!(rows.iter().all(|r| !r.violated()), "{}", summary(&rows));
    }

    #[test]
    fn mean_bound_special_cases() {
        let sb = SpectralBounds { b: 2.0, big_b: 2.0, d: 0.0, big_d: 0.0 };
        let v = mean_sparsity_bound(&sb, 10, 3, 1.5, 0.0, 3.0, 0.5, 7.0);
        let expect = 4.0 * (2.0 * 3.0 * 10.0 * 0.25 + 1.5 * 1.5 * 3.0) / (20.0f64).powi(2);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn ols_risk_below_bound() {
        let setup = RiskBoundSetup {
            replications: 500,
            lambda1: 0.0,
            lambda2: 0.0,
            ..RiskBoundSetup::standard(8)
        };
        let rep = risk_bound_check(&setup).unwrap();
        let p = 35.0;
        let expect = 4.0 * rep.bounds.big_b * p * 9.0 / (rep.bounds.b.powi(2) * 100.0);
        assert!((rep.bound - expect).abs() < 1e-9 * expect);
        assert!(rep.mean_sq_error <= rep.bound);
    }

    #[test]
    fn sparsity_tuning_values() {
        let q = DMatrix::identity(35, 35);
        let b = DVector::from_element(35, 2.0);
        let (l1, l2) = sparsity_tuning(100, 35, 3.0, 0.05, &q, &b).unwrap();
        let expect = 8.0 * 2f64.sqrt() * 3.0 * (700f64.ln() / 100.0).sqrt();
        assert!((l1 - expect).abs() < 1e-12);
        assert!((l2 - expect / 16.0).abs() < 1e-12);
        let (z, _) = sparsity_tuning(100, 35, 0.0, 0.05, &q, &b).unwrap();
        assert_eq!(z, 0.0);
        let (l1b, l2b) = sparsity_tuning(100, 35, 6.0, 0.05, &q, &b).unwrap();
        assert!((l1b - 2.0 * l1).abs() < 1e-12 && (l2b - 2.0 * l2).abs() < 1e-12);
        assert!(matches!(sparsity_tuning(100, 35, 3.0, 0.05, &q, &DVector::zeros(35)), Err(GrilError::ZeroQBeta)));
    }

    #[test]
    fn noiseless_sparsity_inequality() {
        let setup = SparsitySetup {
            sigma: 0.0,
            in_regime_target: 10,
            max_replications: 10,
            re_samples: 2000,
            ..SparsitySetup::standard(4)
        };
        // sigma = 0 makes lambda1* = 0 and the event certain.
        let rep = sparsity_inequality_check(&setup).unwrap();
        assert_eq!(rep.gamma_hits, rep.replications);
        assert_eq!(rep.violations, 0, "{}", summary(&rep.rows));
    }

    #[test]
    fn re_isotropic_and_monotone() {
        let k = DMatrix::identity(4, 4) * 2.5;
        let s = re_constant_sampled(&k, &[0, 1], 1.0, 5000, &mut rng(6)).unwrap();
        assert!((s - 2.5).abs() < 1e-12);
        let e = re_constant_exact(&k, &[0, 1], 1.0).unwrap();
        assert!((e - 2.5).abs() < 1e-9);

        let mut r = rng(7);
        let x = DMatrix::from_fn(12, 5, |_, _| -> f64 { StandardNormal.sample(&mut r) });
        let q = build_identity(5).unwrap();
        let a = re_constant(&x, &q, 0.0, &[0, 2], 1.0, 3).unwrap();
        let b = re_constant(&x, &q, 0.5, &[0, 2], 1.0, 3).unwrap();
        assert!(b >= a);
        assert!(matches!(re_constant(&x, &q, 0.0, &[], 1.0, 3), Err(GrilError::SupportEmpty)));
    }

    #[test]
    fn sampled_re_close_to_exact() {
        let rows = re_check(8, 21).unwrap();
        for r in rows {
            assert!(r.slack >= -1e-9, "sampled below exact: {r:?}");
            assert!(r.slack / r.quantity < 0.10, "gap {r:?}");
        }
    }
}
