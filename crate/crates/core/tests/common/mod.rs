#![allow(dead_code)]

use gril::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// Sparse linear model with unit noise.
pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = gaussian_matrix(n, p, &mut r);
    let beta = DVector::from_fn(p, |j, _| if j < 3 { 2.0 - j as f64 } else if j % 7 == 3 { 0.5 } else { 0.0 });
    let noise = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
    let y = &x * beta + noise;
    Dataset::new(x, y).unwrap()
}

/// Cyclic coordinate descent on `||y - Xb||^2 + l2 b'Qb + l1 sum w_j |b_j|`
/// written against `Q` directly, without any augmentation.
pub fn direct_cd(x: &DMatrix<f64>, y: &DVector<f64>, q: &DMatrix<f64>, l1: f64, l2: f64, w: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let mut b = DVector::<f64>::zeros(p);
    // grad_part[j] = (X'X b)_j + l2 (Q b)_j
    let mut hb = DVector::<f64>::zeros(p);
    for _sweep in 0..200_000 {
        let mut delta_max = 0.0f64;
        for j in 0..p {
            if !w[j].is_finite() {
                continue;
            }
            let a = xtx[(j, j)] + l2 * q[(j, j)];
            if a <= 0.0 {
                continue;
            }
            let c = xty[j] - (hb[j] - a * b[j]);
            let t = 0.5 * l1 * w[j];
            let new = c.signum() * (c.abs() - t).max(0.0) / a;
            let d = new - b[j];
            if d != 0.0 {
                for k in 0..p {
                    hb[k] += d * (xtx[(k, j)] + l2 * q[(k, j)]);
                }
                b[j] = new;
                delta_max = delta_max.max(d.abs());
            }
        }
        if delta_max <= 1e-13 * b.amax().max(1.0) {
            break;
        }
    }
    b
}
