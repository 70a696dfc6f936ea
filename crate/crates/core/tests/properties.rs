mod common;

use common::{direct_cd, gaussian_matrix, random_dataset, rng};
use gril::penalty::{PenaltyKind, PenaltySpec};
use gril::sim::{compute_metrics, Method};
use gril::solver::{gril_path, LarsOptions};
use gril::theory::SpectralBounds;
use gril::tuning::{fold_partition, select, Selector, TuningConfig};
use gril::{augment, gril_fit, standardize, adagril_fit, Dataset, WeightVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn specs() -> Vec<PenaltySpec> {
    vec![
        PenaltySpec::new(PenaltyKind::Identity),
        PenaltySpec::new(PenaltyKind::Cnet),
        PenaltySpec::new(PenaltyKind::WFusion { gamma_wf: 1.0 }),
        PenaltySpec::new(PenaltyKind::SLasso),
    ]
}

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn standardize_twice_is_identity(n in 8usize..40, p in 2usize..8, seed in any::<u64>()) {
        let data = random_dataset(n, p, seed);
        let once = standardize(&data).unwrap();
        let twice = standardize(once.data()).unwrap();
        prop_assert!((twice.x() - once.x()).amax() < 1e-12);
        prop_assert!(twice.col_norms().iter().all(|c| (c - 1.0).abs() < 1e-12));
        prop_assert!(twice.x_means().amax() < 1e-12);
    }

    #[test]
    fn back_mapped_predictions_match(n in 10usize..40, p in 2usize..8, seed in any::<u64>(), frac in 0.05f64..0.9) {
        let data = random_dataset(n, p, seed);
        let std = standardize(&data).unwrap();
        let pm = PenaltySpec::new(PenaltyKind::Identity).build(&std).unwrap();
        let lmax = augment(std.data(), &pm, 0.3).unwrap().lambda_max();
        let fit = gril_fit(std.data(), &pm, frac * lmax, 0.3).unwrap();
        let (b, b0) = std.to_original(fit.beta.beta());
        let on_std = std.x() * fit.beta.beta() + DVector::from_element(n, std.y_mean());
        let on_orig = data.x() * &b + DVector::from_element(n, b0);
        prop_assert!((on_std - on_orig).amax() < 1e-8);
    }

    #[test]
    fn augmentation_identity(n in 6usize..30, p in 2usize..10, seed in any::<u64>(), l2 in 0.0f64..5.0) {
        let data = random_dataset(n, p, seed);
        let std = standardize(&data).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        for spec in specs() {
            let Ok(pm) = spec.build(&std) else { continue };
            let prob = augment(std.data(), &pm, l2).unwrap();
            for _ in 0..10 {
                let b = gaussian_matrix(p, 1, &mut r).column(0).into_owned();
                let lhs = (prob.y_aug() - prob.x_aug() * &b).norm_squared();
                let rhs = std.data().rss(&b) + l2 * pm.quad_form(&b);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
            }
        }
    }

    #[test]
    fn penalty_matrices_are_psd_and_factor(n in 10usize..40, p in 2usize..10, seed in any::<u64>()) {
        let std = standardize(&random_dataset(n, p, seed)).unwrap();
        let mut r = rng(seed);
        for spec in specs() {
            let Ok(pm) = spec.build(&std) else { continue };
            let f = pm.factor();
            let scale = 1.0 + pm.q().amax();
            prop_assert!((f.tr_mul(f) - pm.q()).amax() <= 1e-8 * scale);
            for _ in 0..10 {
                let b = gaussian_matrix(p, 1, &mut r).column(0).into_owned();
                prop_assert!(pm.quad_form(&b) >= -1e-12 * scale * b.norm_squared());
            }
        }
    }

    #[test]
    fn path_breakpoints_match_direct_descent(n in 8usize..30, p in 3usize..12, seed in any::<u64>(), l2 in prop::sample::select(vec![0.0, 0.1, 1.0])) {
        let data = random_dataset(n, p, seed);
        let std = standardize(&data).unwrap();
        let pm = PenaltySpec::new(PenaltyKind::SLasso).build(&std).unwrap();
        let path = gril_path(std.data(), &pm, l2, &WeightVector::unit(p), &LarsOptions::default()).unwrap();
        prop_assert!(path.coefs()[0].iter().all(|v| *v == 0.0));
        let ones = DVector::from_element(p, 1.0);
        for (lam, coef) in path.breakpoints().iter().zip(path.coefs()).skip(1).step_by(2) {
            let cd = direct_cd(std.x(), std.y(), pm.q(), *lam, l2, &ones);
            prop_assert!((cd - coef).amax() <= 1e-6, "lambda {lam}");
        }
    }

    #[test]
    fn unit_weight_adaptive_reduces_to_lasso(n in 10usize..40, p in 2usize..10, seed in any::<u64>(), frac in 0.05f64..0.9) {
        let std = standardize(&random_dataset(n, p, seed)).unwrap();
        let pm = PenaltySpec::new(PenaltyKind::Identity).build(&std).unwrap();
        let l1 = frac * augment(std.data(), &pm, 0.0).unwrap().lambda_max();
        let plain = gril_fit(std.data(), &pm, l1, 0.0).unwrap();
        let ada = adagril_fit(std.data(), &pm, l1, 0.0, &WeightVector::unit(p), true).unwrap();
        prop_assert!((plain.beta.beta() - ada.beta.beta()).amax() <= 1e-8);
    }

    #[test]
    fn folds_cover_each_row_once(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = fold_partition(n, k, seed);
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; n];
        for f in &folds {
            for &i in f {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|c| *c == 1));
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn spectral_bounds_bracket_quadratic_forms(n in 5usize..40, p in 2usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = gaussian_matrix(n, p, &mut r);
        let q = DMatrix::<f64>::identity(p, p) * 2.0;
        let sb = SpectralBounds::compute(&x, &q);
        let g = x.tr_mul(&x) / n as f64;
        for _ in 0..20 {
            let v = gaussian_matrix(p, 1, &mut r).column(0).into_owned();
            let vv = v.norm_squared();
            let form = v.dot(&(&g * &v));
            prop_assert!(form >= sb.b * vv - 1e-8 * (1.0 + form));
            prop_assert!(form <= sb.big_b * vv + 1e-8 * (1.0 + form));
        }
        prop_assert!((sb.d - 2.0).abs() < 1e-12 && (sb.big_d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn metric_counts_stay_in_range(p in 9usize..40, seed in any::<u64>()) {
        let q = p / 9;
        let bstar = gril::sim::beta_star(p, q).unwrap();
        let mut r = rng(seed);
        let noise = gaussian_matrix(p, 1, &mut r).column(0).into_owned();
        let mask = gaussian_matrix(p, 1, &mut r).column(0).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let hat = (&bstar + noise).component_mul(&mask);
        let m = compute_metrics(&hat, &bstar, &DMatrix::identity(p, p)).unwrap();
        prop_assert!(m.c <= p - 3 * q && m.ic <= 3 * q);
        prop_assert!(m.mse_pred >= 0.0 && m.mse_beta >= 0.0);
    }
}

#[test]
fn tuning_is_deterministic() {
    let data = random_dataset(40, 8, 11);
    let std = standardize(&data).unwrap();
    for selector in [Selector::Bic, Selector::KFold { k: 5 }] {
        let cfg = TuningConfig { selector, seed: 3, gamma_override: Some(1.0), ..TuningConfig::default() };
        let spec = Method::AdaCnet.penalty(1.0);
        let a = select(&std, &spec, &cfg, true).unwrap();
        let b = select(&std, &spec, &cfg, true).unwrap();
        assert_eq!(a, b);
        let breakpoints: usize = cfg
            .lambda2_grid
            .iter()
            .map(|&l2| {
                let pm = spec.build(&std).unwrap();
                gril_path(std.data(), &pm, l2, &WeightVector::unit(8), &LarsOptions::default()).unwrap().len()
            })
            .sum();
        let initial = a.score_table.iter().filter(|e| e.stage == gril::tuning::Stage::Initial).count();
        assert_eq!(initial, breakpoints);
    }
}

#[test]
fn adaptive_initial_fits_are_kkt_valid() {
    let design = gril::sim::SimDesign { replications: 4, methods: Method::ALL.to_vec(), ..Default::default() };
    let res = gril::sim::run_experiment(&design).unwrap();
    for r in &res.records {
        assert!(r.kkt <= gril::solver::KKT_TOL, "{} rep {} kkt {}", r.method, r.rep, r.kkt);
        if r.method.is_adaptive() {
            let k = r.initial_kkt.expect("adaptive record has an initial fit");
            assert!(k <= gril::solver::KKT_TOL, "{} rep {} initial kkt {k}", r.method, r.rep);
        }
    }
}

#[test]
fn ill_conditioned_dataset_still_fits() {
    let mut r = rng(5);
    let base = gaussian_matrix(30, 1, &mut r);
    let x = DMatrix::from_fn(30, 4, |i, j| base[(i, 0)] * (1.0 + 1e-3 * j as f64) + if j == 0 { 0.0 } else { 0.05 * (i as f64).sin() * j as f64 });
    let y = x.column(0) * 2.0;
    let data = Dataset::new(x, y.into_owned()).unwrap();
    let std = standardize(&data).unwrap();
    let pm = PenaltySpec::new(PenaltyKind::Identity).build(&std).unwrap();
    let fit = gril_fit(std.data(), &pm, 1e-3, 0.1).unwrap();
    assert!(fit.converged(), "kkt {}", fit.kkt_max_violation);
}
