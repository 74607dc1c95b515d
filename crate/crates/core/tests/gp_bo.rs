mod common;

use common::*;
use mi_placement::bo::{expected_improvement, halton, latin_hypercube, maximize, propose_next, BoConfig};
use mi_placement::gp::{se_kernel, FitOptions, GpSurrogate};
use mi_placement::rng;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Mean and variance by a dense LU solve, built only from the public kernel.
/// `y_mean` is the constant the surrogate subtracts from its targets.
fn dense_oracle(g: &GpSurrogate, x: &[f64], y_mean: f64) -> (f64, f64) {
    let xs = g.train_x();
    let f = g.train_f();
    let n = xs.len();
    let (ls, s2, nv) = (g.lengthscales(), g.signal_var(), g.noise_var());
    let k = DMatrix::from_fn(n, n, |i, j| se_kernel(&xs[i], &xs[j], ls, s2).unwrap() + if i == j { nv } else { 0.0 });
    let ks = DVector::from_fn(n, |i, _| se_kernel(x, &xs[i], ls, s2).unwrap());
    let lu = k.lu();
    let alpha = lu.solve(&DVector::from_fn(n, |i, _| f[i] - y_mean)).unwrap();
    let v = lu.solve(&ks).unwrap();
    (y_mean + ks.dot(&alpha), s2 - ks.dot(&v))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn kernel_values() {
    assert_eq!(se_kernel(&[1.0, 2.0], &[1.0, 2.0], &[0.3, 4.0], 2.5).unwrap(), 2.5);
    let v = se_kernel(&[0.0], &[1.5], &[2.25], 1.0).unwrap();
    assert!((v - (-1f64).exp()).abs() < 1e-15);
    assert!(se_kernel(&[0.0], &[1e4], &[1.0], 1.0).unwrap() < 1e-300);
    assert!(se_kernel(&[0.0], &[1.0], &[0.0], 1.0).is_err());
    assert!(se_kernel(&[0.0], &[1.0, 2.0], &[1.0], 1.0).is_err());
}

#[test]
fn prediction_matches_dense_solve() {
    let mut r = rng::stream(3);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![r.random_range(0.0..4.0), r.random_range(-1.0..1.0)]).collect();
    let fs: Vec<f64> = xs.iter().map(|x| (2.0 * x[0]).sin() + x[1] * x[1]).collect();
    let fitted = GpSurrogate::fit(&xs, &fs, &FitOptions::default()).unwrap();
    let fixed = GpSurrogate::with_hyperparams(xs.clone(), fs.clone(), vec![0.8, 0.5], 1.3, 1e-3).unwrap();
    for g in [&fitted, &fixed] {
        for _ in 0..50 {
            let x = [r.random_range(-0.5..4.5), r.random_range(-1.2..1.2)];
            let (m, v) = g.predict_one(&x);
            let y_mean = if std::ptr::eq(g, &fixed) { 0.0 } else { mean(&fs) };
            let (mo, vo) = dense_oracle(g, &x, y_mean);
            assert!(rel(m, mo) < 1e-8 || (m - mo).abs() < 1e-10, "mean {m} vs {mo}");
            assert!(rel(v, vo) < 1e-8 || (v - vo).abs() < 1e-10 * g.signal_var(), "var {v} vs {vo}");
        }
    }
}

#[test]
fn prior_fallback() {
    let g = GpSurrogate::prior(vec![1.0, 1.0], 2.0).unwrap();
    assert_eq!(g.predict_one(&[0.3, 3.0]), (0.0, 2.0));
}

#[test]
fn interpolates_training_points() {
    let xs = vec![vec![0.0], vec![1.0], vec![2.5]];
    let fs = vec![1.0, -2.0, 0.5];
    let g = GpSurrogate::with_hyperparams(xs.clone(), fs.clone(), vec![1.0], 1.0, 1e-10).unwrap();
    for (x, f) in xs.iter().zip(&fs) {
        let (m, v) = g.predict_one(x);
        assert!((m - f).abs() < 1e-4 && v < 1e-4);
    }
}

#[test]
fn antisymmetric_data_gives_zero_mean() {
    let g = GpSurrogate::with_hyperparams(vec![vec![-1.0], vec![1.0]], vec![-1.0, 1.0], vec![1.0], 1.0, 1e-6).unwrap();
    assert!(g.predict_one(&[0.0]).0.abs() < 1e-12);
    let fitted = GpSurrogate::fit(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0], &FitOptions::default()).unwrap();
    assert!(fitted.predict_one(&[0.0]).0.abs() < 1e-9);
}

#[test]
fn constant_targets() {
    let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
    let g = GpSurrogate::fit(&xs, &[4.2; 6], &FitOptions::default()).unwrap();
    assert!(g.noise_var() <= 1e-8 * g.signal_var() * (1.0 + 1e-12));
    for x in [-3.0, 0.5, 2.2, 9.0] {
        assert!((g.predict_one(&[x]).0 - 4.2).abs() < 1e-9);
    }
}

#[test]
fn rejects_degenerate_training_sets() {
    assert!(GpSurrogate::fit(&[vec![1.0], vec![1.0]], &[0.0, 1.0], &FitOptions::default()).is_err());
    assert!(GpSurrogate::fit(&[vec![1.0]], &[0.0], &FitOptions::default()).is_err());
}

#[test]
fn recovers_lengthscale_of_sampled_gp() {
    let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![5.0 * i as f64 / 39.0]).collect();
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| se_kernel(&xs[i], &xs[j], &[1.0], 1.0).unwrap() + if i == j { 1e-6 } else { 0.0 });
    let l = k.cholesky().unwrap().l();
    let mut hits = 0;
    for seed in 0..20 {
        let z = DVector::from_vec(normals(n, 500 + seed));
        let f: Vec<f64> = (l.clone() * z).iter().copied().collect();
        let g = GpSurrogate::fit(&xs, &f, &FitOptions { seed, ..FitOptions::default() }).unwrap();
        let lam = g.lengthscales()[0];
        if (0.5..=2.0).contains(&lam) {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20 fits in [0.5, 2]");
}

#[test]
fn scaling_targets_scales_signal_variance() {
    let xs: Vec<Vec<f64>> = (0..15).map(|i| vec![0.3 * i as f64]).collect();
    let f: Vec<f64> = xs.iter().map(|x| x[0].sin() + 0.2 * x[0]).collect();
    let f10: Vec<f64> = f.iter().map(|v| 10.0 * v).collect();
    let a = GpSurrogate::fit(&xs, &f, &FitOptions::default()).unwrap();
    let b = GpSurrogate::fit(&xs, &f10, &FitOptions::default()).unwrap();
    assert!(rel(b.signal_var(), 100.0 * a.signal_var()) < 1e-6);
    assert!(rel(b.lengthscales()[0], a.lengthscales()[0]) < 1e-6);
}

/// E[max(0, X - f_best)] by stratified sampling of X ~ N(mu, sigma^2).
fn ei_monte_carlo(mu: f64, sigma: f64, f_best: f64, draws: usize, seed: u64) -> f64 {
    let normal = Normal::new(mu, sigma).unwrap();
    let mut r = rng::stream(seed);
    let mut total = 0.0;
    for i in 0..draws {
        let u = (i as f64 + r.random::<f64>()) / draws as f64;
        total += (normal.inverse_cdf(u) - f_best).max(0.0);
    }
    total / draws as f64
}

#[test]
fn ei_closed_form_vs_monte_carlo() {
    assert_eq!(expected_improvement(0.3, 0.0, 0.0), 0.0);
    for (mu, sigma, fb) in [(0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (-0.5, 0.3, 0.2), (2.0, 2.5, 1.0)] {
        let mc = ei_monte_carlo(mu, sigma, fb, 1_000_000, 9);
        let ei = expected_improvement(mu, sigma, fb);
        assert!((ei - mc).abs() < 1e-3, "({mu}, {sigma}, {fb}): {ei} vs {mc}");
    }
    assert!((expected_improvement(0.0, 1.0, 0.0) - 0.39894).abs() < 1e-5);
    assert!((expected_improvement(1.0, 1.0, 0.0) - 1.08332).abs() < 1e-5);
}

fn ei_of(g: &GpSurrogate, x: f64, f_best: f64) -> f64 {
    let (m, v) = g.predict_one(&[x]);
    expected_improvement(m, v.sqrt(), f_best)
}

#[test]
fn proposal_matches_dense_grid_argmax() {
    let xs: Vec<Vec<f64>> = [0.0, 1.0, 3.0, 4.0].iter().map(|&x| vec![x]).collect();
    let fs: Vec<f64> = xs.iter().map(|x| -(x[0] - 2.0f64).powi(2)).collect();
    let cfg = BoConfig::new(vec![0.0], vec![4.0], 5);
    let fitted = GpSurrogate::fit(&xs, &fs, &FitOptions::default()).unwrap();
    let smooth = GpSurrogate::with_hyperparams(xs.clone(), fs.clone(), vec![2.0], 4.0, 1e-6).unwrap();
    for g in [&fitted, &smooth] {
        let p = propose_next(g, &cfg, -1.0).unwrap();
        let grid_best = (0..=10_000).map(|i| ei_of(g, 4.0 * i as f64 / 1e4, -1.0)).fold(0.0, f64::max);
        assert!(ei_of(g, p[0], -1.0) >= grid_best * (1.0 - 1e-4), "proposal {p:?}");
        assert_eq!(propose_next(g, &cfg, -1.0).unwrap(), p);
    }
    let p = propose_next(&smooth, &cfg, -1.0).unwrap();
    assert!((1.0..=3.0).contains(&p[0]), "proposal {p:?}");
}

#[test]
fn zero_ei_returns_first_candidate() {
    let g = GpSurrogate::prior(vec![1.0, 1.0], 1.0).unwrap();
    let cfg = BoConfig { acq_candidates: 64, ..BoConfig::new(vec![0.0, 0.0], vec![1.0, 1.0], 11) };
    let p = propose_next(&g, &cfg, 1e6).unwrap();
    assert_eq!(p, halton(64, &cfg.lower, &cfg.upper, cfg.seed)[0]);
}

#[test]
fn quadratic_2d_optimum() {
    let c = [0.7, -0.4];
    let lower = vec![-2.0, -1.0];
    let upper = vec![2.0, 1.0];
    let diag = (4.0f64).hypot(2.0);
    let mut hits = 0;
    for seed in 0..20 {
        let cfg = BoConfig { init_count: 6, iter_count: 15, ..BoConfig::new(lower.clone(), upper.clone(), seed) };
        let t = maximize(|x| Ok(-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))), &cfg).unwrap();
        let p = t.incumbent_point();
        if (p[0] - c[0]).hypot(p[1] - c[1]) <= 0.05 * diag {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn multimodal_1d() {
    let f = |x: f64| (3.0 * x).sin() + x;
    let grid_max = (0..=10_000).map(|i| f(4.0 * i as f64 / 10_000.0)).fold(f64::NEG_INFINITY, f64::max);
    let cfg = BoConfig { init_count: 5, iter_count: 15, ..BoConfig::new(vec![0.0], vec![4.0], 21) };
    let t = maximize(|x| Ok(f(x[0])), &cfg).unwrap();
    assert!(t.incumbent_value() >= 0.99 * grid_max, "{} vs {grid_max}", t.incumbent_value());
}

#[test]
fn no_iterations_keeps_initial_design() {
    let cfg = BoConfig { init_count: 8, iter_count: 0, ..BoConfig::new(vec![0.0, 0.0], vec![1.0, 1.0], 3) };
    let t = maximize(|x| Ok(x[0] - x[1]), &cfg).unwrap();
    assert_eq!(t.points, latin_hypercube(8, &cfg.lower, &cfg.upper, rng::derive_seed(3, &[0])));
    assert_eq!(t.incumbent_value(), t.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
}

fn gp_points(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed);
    (0..n).map(|_| vec![r.random_range(0.0..3.0), r.random_range(0.0..3.0)]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ei_nonnegative_and_monotone(mu in -3.0f64..3.0, sigma in 0.05f64..3.0, fb in -1.0f64..1.0) {
        let e = expected_improvement(mu, sigma, fb);
        prop_assert!(e >= 0.0);
        let z = (mu - fb) / sigma;
        prop_assume!(z > -8.0);
        prop_assert!(expected_improvement(mu + 0.01, sigma, fb) > e);
        prop_assert!(expected_improvement(mu, sigma + 0.01, fb) > e);
    }

    #[test]
    fn variance_bounded_by_prior(seed in any::<u64>(), n in 2usize..20, qx in -1.0f64..4.0, qy in -1.0f64..4.0) {
        let xs = gp_points(seed, n);
        let fs: Vec<f64> = xs.iter().map(|x| x[0].cos() * x[1]).collect();
        let g = GpSurrogate::with_hyperparams(xs, fs, vec![0.7, 1.3], 1.7, 1e-4).unwrap();
        let (_, v) = g.predict_one(&[qx, qy]);
        prop_assert!((0.0..=1.7 + 1e-9).contains(&v));
    }

    #[test]
    fn more_data_never_raises_variance(seed in any::<u64>(), n in 2usize..15, qx in 0.0f64..3.0, qy in 0.0f64..3.0) {
        let xs = gp_points(seed, n + 1);
        let fs: Vec<f64> = xs.iter().map(|x| x[0] - x[1]).collect();
        let small = GpSurrogate::with_hyperparams(xs[..n].to_vec(), fs[..n].to_vec(), vec![0.5, 0.5], 1.0, 1e-4).unwrap();
        let big = GpSurrogate::with_hyperparams(xs, fs, vec![0.5, 0.5], 1.0, 1e-4).unwrap();
        prop_assert!(big.predict_one(&[qx, qy]).1 <= small.predict_one(&[qx, qy]).1 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trace_invariants(seed in any::<u64>(), cx in -1.0f64..1.0, cy in 0.0f64..2.0) {
        let cfg = BoConfig { init_count: 4, iter_count: 6, acq_candidates: 256, ..BoConfig::new(vec![-1.0, 0.0], vec![1.0, 2.0], seed) };
        let t = maximize(|x| Ok(-(x[0] - cx).abs() - (x[1] - cy).powi(2)), &cfg).unwrap();
        prop_assert_eq!(t.points.len(), 10);
        prop_assert!(t.running_best().windows(2).all(|w| w[1] >= w[0]));
        for p in &t.points {
            prop_assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 2.0);
        }
        prop_assert_eq!(t.incumbent_value(), *t.running_best().last().unwrap());
    }
}
