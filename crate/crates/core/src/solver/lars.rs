use nalgebra::{DMatrix, DVector};

use super::{AugmentedProblem, WeightVector};
use crate::error::{GrilError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LarsOptions {
    /// The path stops at this fraction of `lambda_max`.
    pub lambda1_min_ratio: f64,
    /// Defaults to `50 * min(rows, p)`.
    pub max_steps: Option<usize>,
    /// Relative gap under which two candidate step lengths count as tied.
    pub tie_tol: f64,
    /// Minimum squared relative pivot for a variable to join the active set.
    pub rank_tol: f64,
}

impl Default for LarsOptions {
    fn default() -> Self {
        Self {
            lambda1_min_ratio: 1e-4,
            max_steps: None,
            tie_tol: 1e-12,
            rank_tol: 1e-10,
        }
    }
}

/// Piecewise-linear lasso path: `coefs[k]` solves the problem at `breakpoints[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    breakpoints: Vec<f64>,
    coefs: Vec<DVector<f64>>,
    lambda2: f64,
    weights: WeightVector,
}

impl PathSolution {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coefs(&self) -> &[DVector<f64>] {
        &self.coefs
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn max_active(&self) -> usize {
        self.coefs
            .iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
    }

    /// Linear interpolation between breakpoints; `None` below the last one.
    pub fn coef_at(&self, lambda1: f64) -> Option<DVector<f64>> {
        let bps = &self.breakpoints;
        if lambda1 >= bps[0] {
            return Some(DVector::zeros(self.coefs[0].len()));
        }
        for k in 0..bps.len() - 1 {
            let (hi, lo) = (bps[k], bps[k + 1]);
            if lambda1 <= hi && lambda1 >= lo {
                let t = (hi - lambda1) / (hi - lo);
                return Some(&self.coefs[k] * (1.0 - t) + &self.coefs[k + 1] * t);
            }
        }
        None
    }
}

/// Lasso path from `lambda_max` down to `lambda1_min_ratio * lambda_max`.
pub fn lars_lasso_path(problem: &AugmentedProblem, opts: &LarsOptions) -> Result<PathSolution> {
    let stop = opts.lambda1_min_ratio * problem.lambda_max();
    run(problem, stop, opts)
}

/// Lasso path from `lambda_max` down to exactly `lambda_stop`; the last
/// coefficient vector is the solution at `lambda_stop`.
pub fn lars_lasso_path_to(
    problem: &AugmentedProblem,
    lambda_stop: f64,
    opts: &LarsOptions,
) -> Result<PathSolution> {
    if !(lambda_stop >= 0.0) {
        return Err(GrilError::InvalidParameter(format!(
            "lambda1 must be nonnegative, got {lambda_stop}"
        )));
    }
    run(problem, lambda_stop, opts)
}

/// Relative correlation gap treated as zero.
const NOISE_FLOOR: f64 = 1e-11;

enum Event {
    End,
    Add(usize),
    Drop(usize),
}

fn run(problem: &AugmentedProblem, lambda_stop: f64, opts: &LarsOptions) -> Result<PathSolution> {
    let p = problem.p();
    let w = problem.weights().values();
    let free: Vec<usize> = (0..p).filter(|&j| w[j].is_finite()).collect();
    let m = free.len();

    // Work with x_j / w_j so the weighted problem becomes a plain lasso.
    let mut xs = DMatrix::zeros(problem.x_aug().nrows(), m);
    for (k, &j) in free.iter().enumerate() {
        xs.set_column(k, &(problem.x_aug().column(j) / w[j]));
    }
    let gram = xs.tr_mul(&xs);
    let b = xs.tr_mul(problem.y_aug());

    let to_full = |beta: &DVector<f64>| {
        let mut out = DVector::zeros(p);
        for (k, &j) in free.iter().enumerate() {
            out[j] = beta[k] / w[j];
        }
        out
    };

    let mut beta = DVector::<f64>::zeros(m);
    let mut c = b.clone();
    let mut cmax = c.amax();
    let mut breakpoints = vec![2.0 * cmax];
    let mut coefs = vec![DVector::zeros(p)];
    let finish = |breakpoints, coefs| PathSolution {
        breakpoints,
        coefs,
        lambda2: problem.lambda2(),
        weights: problem.weights().clone(),
    };
    let c_stop = lambda_stop / 2.0;
    if m == 0 || cmax == 0.0 || cmax <= c_stop {
        return Ok(finish(breakpoints, coefs));
    }

    let max_steps = opts
        .max_steps
        .unwrap_or(50 * problem.x_aug().nrows().min(p).max(1));
    let tie = opts.tie_tol * cmax;
    let mut cmax_err = f64::EPSILON * cmax;

    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut is_active = vec![false; m];
    let mut blocked = vec![false; m];
    let mut just_dropped: Option<usize> = None;

    // First entrant: largest |c|, lowest index on ties.
    let first = (0..m)
        .find(|&j| c[j].abs() >= cmax - tie)
        .expect("max exists");
    active.push(first);
    signs.push(c[first].signum());
    is_active[first] = true;

    let mut steps = 0usize;
    loop {
        if steps >= max_steps {
            return Err(GrilError::MaxStepsExceeded(max_steps));
        }
        steps += 1;

        let k = active.len();
        let g_a = DMatrix::from_fn(k, k, |r, s| gram[(active[r], active[s])]);
        let s_a = DVector::from_column_slice(&signs);
        let chol = g_a
            .cholesky()
            .ok_or_else(|| GrilError::DegenerateStep(active[0], active[k - 1]))?;
        let d_a = chol.solve(&s_a);
        if d_a.iter().any(|v| !v.is_finite()) {
            return Err(GrilError::DegenerateStep(active[0], active[k - 1]));
        }
        let mut a = DVector::zeros(m);
        for (r, &j) in active.iter().enumerate() {
            a.axpy(d_a[r], &gram.column(j), 1.0);
        }

        let mut step = cmax - c_stop;
        let mut event = Event::End;
        let tie = opts.tie_tol * cmax;
        // Events closer than this to the end of the path are round-off.
        let horizon = step - NOISE_FLOOR * cmax;

        let mut best_add: Option<(f64, usize)> = None;
        for j in 0..m {
            if is_active[j] || blocked[j] {
                continue;
            }
            for (num, den) in [(cmax - c[j], 1.0 - a[j]), (cmax + c[j], 1.0 + a[j])] {
                // A variable that just left may only come back with the other sign.
                if just_dropped == Some(j) && num <= tie {
                    continue;
                }
                if den > 1e-12 {
                    let g = num.max(0.0) / den;
                    match best_add {
                        Some((bg, _)) if g >= bg - tie => {}
                        _ => best_add = Some((g, j)),
                    }
                }
            }
        }
        if let Some((g, j)) = best_add {
            if g < step && g < horizon {
                step = g;
                event = Event::Add(j);
            }
        }
        for (r, &j) in active.iter().enumerate() {
            if beta[j] != 0.0 && d_a[r] != 0.0 {
                let g = -beta[j] / d_a[r];
                if g > 0.0 && g < step && g < horizon {
                    step = g;
                    event = Event::Drop(j);
                }
            }
        }

        for (r, &j) in active.iter().enumerate() {
            beta[j] += step * d_a[r];
        }
        c = &b - &gram * &beta;
        // The level is known three ways: by subtraction, which drifts once
        // lambda_max is many decades up, and from the correlation of any
        // active or entering column, whose rounding scales with |b_j| plus
        // the Gram terms. Keep the estimate with the smallest error bound.
        let mut level = (cmax - step, cmax_err + f64::EPSILON * (cmax.abs() + step.abs()));
        let entering = match event {
            Event::Add(j) => Some(j),
            _ => None,
        };
        for &j in active.iter().chain(entering.iter()) {
            let scale = b[j].abs() + active.iter().map(|&k| (gram[(j, k)] * beta[k]).abs()).sum::<f64>();
            let err = 4.0 * f64::EPSILON * scale;
            if err < level.1 {
                level = (c[j].abs(), err);
            }
        }
        (cmax, cmax_err) = level;

        match event {
            Event::End => {
                let last = *breakpoints.last().expect("nonempty");
                if lambda_stop < last - 1e-14 * breakpoints[0] {
                    breakpoints.push(lambda_stop);
                    coefs.push(to_full(&beta));
                } else {
                    *coefs.last_mut().expect("nonempty") = to_full(&beta);
                }
                break;
            }
            Event::Drop(j) => {
                beta[j] = 0.0;
                let pos = active.iter().position(|&v| v == j).expect("active");
                active.remove(pos);
                signs.remove(pos);
                is_active[j] = false;
                blocked.iter_mut().for_each(|v| *v = false);
                just_dropped = Some(j);
            }
            Event::Add(j) => {
                if admits(&gram, &active, j, opts.rank_tol) {
                    active.push(j);
                    signs.push(c[j].signum());
                    is_active[j] = true;
                    just_dropped = None;
                } else {
                    blocked[j] = true;
                }
            }
        }

        let lam = 2.0 * cmax;
        let last = *breakpoints.last().expect("nonempty");
        if lam < last - 1e-14 * breakpoints[0] {
            breakpoints.push(lam);
            coefs.push(to_full(&beta));
        } else {
            *coefs.last_mut().expect("nonempty") = to_full(&beta);
        }

        if active.is_empty() {
            // Every variable dropped out: the next entrant is the new maximum.
            let j = (0..m)
                .filter(|&j| just_dropped != Some(j))
                .max_by(|&x, &y| c[x].abs().total_cmp(&c[y].abs()).then(y.cmp(&x)));
            match j {
                Some(j) => {
                    active.push(j);
                    signs.push(c[j].signum());
                    is_active[j] = true;
                }
                None => break,
            }
        }
    }
    Ok(finish(breakpoints, coefs))
}

/// Whether column `j` is numerically independent of the active columns.
fn admits(gram: &DMatrix<f64>, active: &[usize], j: usize, rank_tol: f64) -> bool {
    let gjj = gram[(j, j)];
    if gjj <= 0.0 {
        return false;
    }
    if active.is_empty() {
        return true;
    }
    let k = active.len();
    let g_a = DMatrix::from_fn(k, k, |r, s| gram[(active[r], active[s])]);
    let g_aj = DVector::from_fn(k, |r, _| gram[(active[r], j)]);
    let Some(chol) = g_a.cholesky() else {
        return false;
    };
    let z = chol.l().solve_lower_triangular(&g_aj).expect("nonsingular factor");
    let pivot = gjj - z.norm_squared();
    pivot > rank_tol * gjj
}
