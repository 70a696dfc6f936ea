//! Ridge-lasso fitting.
//!
//! A fit minimizes
//!
//! ```text
//! ||y - X b||^2 + lambda2 * b'Q b + lambda1 * sum_j w_j |b_j|
//! ```
//!
//! by stacking `sqrt(lambda2) * F` (with `F'F = Q`) under `X` and zeros under
//! `y`, which turns it into a weighted lasso. The weighted lasso is solved by
//! the LARS-lasso homotopy after rescaling each column by `1/w_j`;
//! [`coordinate_descent_solve`] is an independent solver for the same problem.

mod cd;
mod lars;
mod weights;

use nalgebra::{DMatrix, DVector};

pub use cd::{coordinate_descent_solve, CdOptions};
pub use lars::{lars_lasso_path, lars_lasso_path_to, LarsOptions, PathSolution};
pub use weights::{make_weights, WeightScheme, WeightVector};

use crate::data::{CoefficientVector, Dataset};
use crate::error::{GrilError, Result};
use crate::penalty::PenaltyMatrix;

/// Relative KKT tolerance a converged fit must meet.
pub const KKT_TOL: f64 = 1e-6;

/// The stacked lasso problem `[X; sqrt(lambda2) F]`, `[y; 0]` with l1 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedProblem {
    x_aug: DMatrix<f64>,
    y_aug: DVector<f64>,
    lambda2: f64,
    weights: WeightVector,
    n_obs: usize,
}

impl AugmentedProblem {
    /// Plain (unstacked) weighted lasso on `x`, `y`.
    pub fn lasso(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(GrilError::DimensionMismatch(format!(
                "x has {} rows, y has {}",
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        let n_obs = x.nrows();
        Ok(Self {
            x_aug: x,
            y_aug: y,
            lambda2: 0.0,
            weights: WeightVector::unit(p),
            n_obs,
        })
    }

    pub fn with_weights(mut self, weights: WeightVector) -> Result<Self> {
        if weights.len() != self.p() {
            return Err(GrilError::DimensionMismatch(format!(
                "{} weights for {} columns",
                weights.len(),
                self.p()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn x_aug(&self) -> &DMatrix<f64> {
        &self.x_aug
    }

    pub fn y_aug(&self) -> &DVector<f64> {
        &self.y_aug
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn p(&self) -> usize {
        self.x_aug.ncols()
    }

    /// Rows of the original design (the top block).
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// `||y_aug - X_aug b||^2 + lambda1 * sum w_j |b_j|` (infinite-weight
    /// coordinates contribute nothing when zero).
    pub fn objective(&self, beta: &DVector<f64>, lambda1: f64) -> f64 {
        let loss = (&self.y_aug - &self.x_aug * beta).norm_squared();
        loss + lambda1 * weighted_l1(self.weights.values(), beta)
    }

    /// Smallest `lambda1` at which the zero vector is optimal.
    pub fn lambda_max(&self) -> f64 {
        let c = self.x_aug.tr_mul(&self.y_aug);
        (0..self.p())
            .filter(|&j| !self.weights.is_excluded(j))
            .map(|j| 2.0 * c[j].abs() / self.weights.values()[j])
            .fold(0.0, f64::max)
    }
}

fn weighted_l1(w: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    w.iter()
        .zip(beta.iter())
        .filter(|(_, b)| **b != 0.0)
        .map(|(w, b)| w * b.abs())
        .sum()
}

/// Stacks `sqrt(lambda2) * F` below the design and zeros below the response.
pub fn augment(data: &Dataset, penalty: &PenaltyMatrix, lambda2: f64) -> Result<AugmentedProblem> {
    let (n, p) = (data.n(), data.p());
    if penalty.p() != p {
        return Err(GrilError::DimensionMismatch(format!(
            "penalty is {}x{} but design has p={p}",
            penalty.p(),
            penalty.p()
        )));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return Err(GrilError::InvalidParameter(format!(
            "lambda2 must be nonnegative, got {lambda2}"
        )));
    }
    let mut x_aug = DMatrix::zeros(n + p, p);
    x_aug.rows_mut(0, n).copy_from(data.x());
    if lambda2 > 0.0 {
        x_aug
            .rows_mut(n, p)
            .copy_from(&(penalty.factor() * lambda2.sqrt()));
    }
    let mut y_aug = DVector::zeros(n + p);
    y_aug.rows_mut(0, n).copy_from(data.y());
    Ok(AugmentedProblem {
        x_aug,
        y_aug,
        lambda2,
        weights: WeightVector::unit(p),
        n_obs: n,
    })
}

/// Result of a single ridge-lasso or adaptive fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Reported estimate (after the `N` rescaling for adaptive fits).
    pub beta: CoefficientVector,
    /// Minimizer of the penalized objective, before any rescaling.
    pub inner: CoefficientVector,
    pub lambda1: f64,
    pub lambda2: f64,
    pub weights: WeightVector,
    pub kkt_max_violation: f64,
    /// Objective value at `inner`.
    pub objective: f64,
    pub rescaled: bool,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        self.kkt_max_violation <= KKT_TOL
    }
}

/// `||y - X b||^2 + lambda2 b'Qb + lambda1 sum w_j |b_j|`.
pub fn penalized_objective(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda1: f64,
    lambda2: f64,
    weights: &WeightVector,
    beta: &DVector<f64>,
) -> f64 {
    data.rss(beta) + lambda2 * penalty.quad_form(beta) + lambda1 * weighted_l1(weights.values(), beta)
}

/// Max relative violation of the (weighted) stationarity conditions
/// `-2 x_j'(y - Xb) + lambda1 w_j sgn(b_j) + 2 lambda2 (Qb)_j = 0` on the
/// support and `|-2 x_j'(y - Xb) + 2 lambda2 (Qb)_j| <= lambda1 w_j` off it,
/// each normalized by `1 + lambda1 w_j`.
pub fn kkt_check(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda1: f64,
    lambda2: f64,
    weights: &WeightVector,
    beta: &DVector<f64>,
) -> f64 {
    let r = data.residual(beta);
    let grad = -2.0 * data.x().tr_mul(&r) + 2.0 * lambda2 * (penalty.q() * beta);
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let w = weights.values()[j];
        let v = if beta[j] != 0.0 {
            if w.is_infinite() {
                f64::INFINITY
            } else {
                (grad[j] + lambda1 * w * beta[j].signum()).abs() / (1.0 + lambda1 * w)
            }
        } else if w.is_infinite() {
            0.0
        } else {
            (grad[j].abs() - lambda1 * w).max(0.0) / (1.0 + lambda1 * w)
        };
        worst = worst.max(v);
    }
    worst
}

/// Diagonal of `N = diag(1 + lambda2 q_j / n)`.
pub fn rescaling_factors(penalty: &PenaltyMatrix, lambda2: f64, n_obs: usize) -> DVector<f64> {
    penalty.diag_q().map(|q| 1.0 + lambda2 * q / n_obs as f64)
}

/// Ridge-lasso fit at a single `(lambda1, lambda2)` with unit weights.
pub fn gril_fit(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda1: f64,
    lambda2: f64,
) -> Result<FitReport> {
    weighted_fit(data, penalty, lambda1, lambda2, WeightVector::unit(data.p()), false)
}

/// Adaptive fit: weighted-l1 ridge-lasso followed by the `N` rescaling
/// (skipped when `rescale` is false).
pub fn adagril_fit(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda1_star: f64,
    lambda2: f64,
    weights: &WeightVector,
    rescale: bool,
) -> Result<FitReport> {
    if weights.len() != data.p() {
        return Err(GrilError::DimensionMismatch(format!(
            "{} weights for p={}",
            weights.len(),
            data.p()
        )));
    }
    weighted_fit(data, penalty, lambda1_star, lambda2, weights.clone(), rescale)
}

fn weighted_fit(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda1: f64,
    lambda2: f64,
    weights: WeightVector,
    rescale: bool,
) -> Result<FitReport> {
    if !(lambda1 >= 0.0) || !lambda1.is_finite() {
        return Err(GrilError::InvalidParameter(format!(
            "lambda1 must be nonnegative, got {lambda1}"
        )));
    }
    let p = data.p();
    let inner = if weights.all_excluded() {
        DVector::zeros(p)
    } else {
        let problem = augment(data, penalty, lambda2)?.with_weights(weights.clone())?;
        let path = lars_lasso_path_to(&problem, lambda1, &LarsOptions::default())?;
        let raw = path.coefs().last().cloned().unwrap_or_else(|| DVector::zeros(p));
        polish(&problem, lambda1, raw)
    };
    let kkt = kkt_check(data, penalty, lambda1, lambda2, &weights, &inner);
    let objective = penalized_objective(data, penalty, lambda1, lambda2, &weights, &inner);
    let beta = if rescale {
        inner.component_mul(&rescaling_factors(penalty, lambda2, data.n()))
    } else {
        inner.clone()
    };
    Ok(FitReport {
        beta: CoefficientVector::new(beta),
        inner: CoefficientVector::new(inner),
        lambda1,
        lambda2,
        weights,
        kkt_max_violation: kkt,
        objective,
        rescaled: rescale,
    })
}

/// Re-solves the stationarity equations on the active set in unscaled
/// coordinates. Widely spread weights make the scaled LARS Gram matrix badly
/// conditioned; the refined point is kept only if the signs survive and the
/// optimality gap shrinks.
fn polish(problem: &AugmentedProblem, lambda1: f64, beta: DVector<f64>) -> DVector<f64> {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return beta;
    }
    let w = problem.weights().values();
    let xa = problem.x_aug().select_columns(&active);
    let rhs = xa.tr_mul(problem.y_aug())
        - DVector::from_fn(active.len(), |k, _| 0.5 * lambda1 * w[active[k]] * beta[active[k]].signum());
    let Some(chol) = xa.tr_mul(&xa).cholesky() else {
        return beta;
    };
    let sol = chol.solve(&rhs);
    if active.iter().zip(sol.iter()).any(|(&j, v)| !v.is_finite() || v.signum() != beta[j].signum()) {
        return beta;
    }
    let mut out = beta.clone();
    for (&j, v) in active.iter().zip(sol.iter()) {
        out[j] = *v;
    }
    if lasso_gap(problem, lambda1, &out) < lasso_gap(problem, lambda1, &beta) {
        out
    } else {
        beta
    }
}

/// Same normalization as [`kkt_check`], on the augmented problem.
fn lasso_gap(problem: &AugmentedProblem, lambda1: f64, beta: &DVector<f64>) -> f64 {
    let r = problem.y_aug() - problem.x_aug() * beta;
    let grad = -2.0 * problem.x_aug().tr_mul(&r);
    let w = problem.weights().values();
    (0..beta.len())
        .map(|j| {
            if w[j].is_infinite() {
                return if beta[j] == 0.0 { 0.0 } else { f64::INFINITY };
            }
            let t = lambda1 * w[j];
            if beta[j] != 0.0 {
                (grad[j] + t * beta[j].signum()).abs() / (1.0 + t)
            } else {
                (grad[j].abs() - t).max(0.0) / (1.0 + t)
            }
        })
        .fold(0.0, f64::max)
}

/// Full weighted path for fixed `lambda2`; coefficients are inner solutions.
pub fn gril_path(
    data: &Dataset,
    penalty: &PenaltyMatrix,
    lambda2: f64,
    weights: &WeightVector,
    opts: &LarsOptions,
) -> Result<PathSolution> {
    let problem = augment(data, penalty, lambda2)?.with_weights(weights.clone())?;
    lars_lasso_path(&problem, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::build_identity;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn augment_identity_block() {
        let data = random_data(6, 3, 1);
        let pm = build_identity(3).unwrap();
        let prob = augment(&data, &pm, 4.0).unwrap();
        let bottom = prob.x_aug().rows(6, 3).into_owned();
        assert!((bottom - DMatrix::<f64>::identity(3, 3) * 2.0).amax() < 1e-15);
        assert!(prob.y_aug().rows(6, 3).iter().all(|v| *v == 0.0));
        let prob0 = augment(&data, &pm, 0.0).unwrap();
        assert!(prob0.x_aug().rows(6, 3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn augment_rejects_bad_input() {
        let data = random_data(6, 3, 1);
        let pm = build_identity(4).unwrap();
        assert!(matches!(augment(&data, &pm, 1.0), Err(GrilError::DimensionMismatch(_))));
        let pm = build_identity(3).unwrap();
        assert!(augment(&data, &pm, -1.0).is_err());
    }

    #[test]
    fn kkt_zero_above_lambda_max() {
        let data = random_data(10, 4, 2);
        let pm = build_identity(4).unwrap();
        let lmax = 2.0 * data.x().tr_mul(data.y()).amax();
        let v = kkt_check(&data, &pm, lmax * 1.01, 0.0, &WeightVector::unit(4), &DVector::zeros(4));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn all_infinite_weights_give_zero_fit() {
        let data = random_data(10, 3, 3);
        let pm = build_identity(3).unwrap();
        let w = WeightVector::from_values(DVector::from_element(3, f64::INFINITY), 0.0, WeightScheme::CappedInverse).unwrap();
        let fit = adagril_fit(&data, &pm, 1.0, 0.5, &w, true).unwrap();
        assert_eq!(fit.beta.df(), 0);
        assert_eq!(fit.kkt_max_violation, 0.0);
    }
}
