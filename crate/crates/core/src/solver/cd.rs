use nalgebra::DVector;

use super::AugmentedProblem;
use crate::data::CoefficientVector;
use crate::error::{GrilError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CdOptions {
    /// Converged when the largest coordinate change in a sweep is below
    /// `tol * max(1, ||b||_inf)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

/// Cyclic coordinate descent on the weighted lasso
/// `||y_aug - X_aug b||^2 + lambda1 sum w_j |b_j|`, using Gram updates.
pub fn coordinate_descent_solve(
    problem: &AugmentedProblem,
    lambda1: f64,
    opts: &CdOptions,
) -> Result<CoefficientVector> {
    if !(lambda1 >= 0.0) {
        return Err(GrilError::InvalidParameter(format!(
            "lambda1 must be nonnegative, got {lambda1}"
        )));
    }
    let p = problem.p();
    let w = problem.weights().values();
    let gram = problem.x_aug().tr_mul(problem.x_aug());
    let xty = problem.x_aug().tr_mul(problem.y_aug());
    let free: Vec<usize> = (0..p)
        .filter(|&j| w[j].is_finite() && gram[(j, j)] > 0.0)
        .collect();

    let mut beta = DVector::<f64>::zeros(p);
    // corr[j] = x_j'(y - X b)
    let mut corr = xty.clone();
    let sweep = |beta: &mut DVector<f64>, corr: &mut DVector<f64>, active_only: bool| {
        let mut max_delta = 0.0f64;
        for &j in &free {
            if active_only && beta[j] == 0.0 {
                continue;
            }
            let gjj = gram[(j, j)];
            let z = corr[j] + gjj * beta[j];
            let thresh = 0.5 * lambda1 * w[j];
            let new = z.signum() * (z.abs() - thresh).max(0.0) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                corr.axpy(-delta, &gram.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    };

    let mut sweeps = 0usize;
    while sweeps < opts.max_sweeps {
        let delta = sweep(&mut beta, &mut corr, false);
        sweeps += 1;
        if delta < opts.tol * beta.amax().max(1.0) {
            return Ok(CoefficientVector::new(beta));
        }
        while sweeps < opts.max_sweeps {
            let delta = sweep(&mut beta, &mut corr, true);
            sweeps += 1;
            if sweeps % 64 == 0 {
                corr = &xty - &gram * &beta;
            }
            if delta < opts.tol * beta.amax().max(1.0) {
                break;
            }
        }
        corr = &xty - &gram * &beta;
    }
    Err(GrilError::NoConvergence(opts.max_sweeps))
}
