mod common;

use common::*;
use mi_placement::mi::{digamma, EULER_MASCHERONI};
use mi_placement::mi::{knn_entropy, ksg_mi, KnnConfig, NeighborSearch};
use mi_placement::{Error, SampleMatrix};
use proptest::prelude::*;

#[test]
fn digamma_values() {
    assert!((digamma(1).unwrap() + 0.577_215_6).abs() < 1e-7);
    assert!((digamma(1).unwrap() + EULER_MASCHERONI).abs() < 1e-15);
    assert!((digamma(2).unwrap() - 0.422_784_3).abs() < 1e-7);
    // psi(1) + 1 + 1/2 + 1/3 + 1/4
    let five = -EULER_MASCHERONI + 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
    assert!((digamma(5).unwrap() - five).abs() < 1e-14);
    assert!((digamma(5).unwrap() - 1.506_117_6).abs() < 1e-7);
    assert!(digamma(0).is_err());
}

#[test]
fn digamma_recursion_across_series_switch() {
    for n in 1..300u64 {
        let lhs = digamma(n + 1).unwrap();
        let rhs = digamma(n).unwrap() + 1.0 / n as f64;
        assert!((lhs - rhs).abs() < 1e-12, "n = {n}");
    }
}

#[test]
fn entropy_of_uniform() {
    let x = SampleMatrix::from_column(&uniforms(5000, 3)).unwrap();
    let h = knn_entropy(&x, &KnnConfig::default()).unwrap();
    assert!(h.abs() < 0.05, "h = {h}");
}

#[test]
fn entropy_of_normal() {
    let x = SampleMatrix::from_column(&normals(5000, 4)).unwrap();
    let h = knn_entropy(&x, &KnnConfig::default()).unwrap();
    let want = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((h - want).abs() < 0.05, "h = {h}");
}

#[test]
fn entropy_of_2d_normal() {
    let x = columns(&[normals(5000, 5), normals(5000, 6)]);
    let h = knn_entropy(&x, &KnnConfig::default()).unwrap();
    let want = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((h - want).abs() < 0.08, "h = {h}");
}

#[test]
fn independent_uniforms() {
    let x = SampleMatrix::from_column(&uniforms(2000, 10)).unwrap();
    let y = SampleMatrix::from_column(&uniforms(2000, 11)).unwrap();
    let mi = ksg_mi(&x, &y, &KnnConfig::default()).unwrap();
    assert!(mi.abs() < 0.05, "mi = {mi}");
}

#[test]
fn correlated_gaussian() {
    let (x, y) = gaussian_pair(2000, 0.9, 12);
    let mi = ksg_mi(&x, &y, &KnnConfig::default()).unwrap();
    assert!((mi - gaussian_mi(0.9)).abs() < 0.08, "mi = {mi}");
    assert!((gaussian_mi(0.9) - 0.830).abs() < 1e-3);
}

#[test]
fn monotone_maps_leave_mi_unchanged() {
    let (x, y) = gaussian_pair(2000, 0.5, 13);
    let cfg = KnnConfig::default();
    let base = ksg_mi(&x, &y, &cfg).unwrap();
    for f in [|v: f64| v.exp(), |v: f64| v * v * v + v, |v: f64| (3.0 * v).atan()] {
        let mapped = ksg_mi(&x.map(f).unwrap(), &y, &cfg).unwrap();
        assert!((mapped - base).abs() < 0.05, "{mapped} vs {base}");
    }
}

#[test]
fn brute_force_matches_tree() {
    let x = columns(&[normals(700, 20), normals(700, 21)]);
    let y = columns(&[normals(700, 22)]);
    let tree = KnnConfig::default();
    let brute = KnnConfig { search: NeighborSearch::BruteForce, ..tree };
    assert_eq!(ksg_mi(&x, &y, &tree).unwrap(), ksg_mi(&x, &y, &brute).unwrap());
    assert_eq!(knn_entropy(&x, &tree).unwrap(), knn_entropy(&x, &brute).unwrap());
}

#[test]
fn clamped_duplicates_are_broken_by_jitter() {
    // many identical floor values, as produced by sensors the plume misses
    let mut v = vec![-27.631; 300];
    v.extend(normals(300, 30).iter().map(|z| -14.0 + z));
    let x = SampleMatrix::from_column(&v).unwrap();
    let y = SampleMatrix::from_column(&normals(600, 31)).unwrap();
    assert!(ksg_mi(&x, &y, &KnnConfig::default()).unwrap().is_finite());
    let off = KnnConfig { jitter_scale: 0.0, ..KnnConfig::default() };
    assert!(matches!(knn_entropy(&x, &off), Err(Error::DegenerateNeighbors { .. })));
}

#[test]
fn rejects_bad_inputs() {
    let x = SampleMatrix::from_column(&normals(6, 1)).unwrap();
    assert!(knn_entropy(&x, &KnnConfig::default()).is_err());
    let a = SampleMatrix::from_column(&normals(50, 1)).unwrap();
    let b = SampleMatrix::from_column(&normals(40, 2)).unwrap();
    assert!(ksg_mi(&a, &b, &KnnConfig::default()).is_err());
    assert!(knn_entropy(&a, &KnnConfig::with_k(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ksg_symmetric_bitwise(seed in any::<u64>(), rho in -0.95f64..0.95, n in 50usize..400) {
        let (x, y) = gaussian_pair(n, rho, seed);
        let cfg = KnnConfig::default();
        prop_assert_eq!(ksg_mi(&x, &y, &cfg).unwrap().to_bits(), ksg_mi(&y, &x, &cfg).unwrap().to_bits());
    }

    #[test]
    fn entropy_scaling_law(seed in any::<u64>(), a in 0.01f64..100.0, dim in 1usize..4) {
        let cols: Vec<Vec<f64>> = (0..dim).map(|j| normals(300, seed.wrapping_add(j as u64))).collect();
        let x = columns(&cols);
        let cfg = KnnConfig::default();
        let h = knn_entropy(&x, &cfg).unwrap();
        let hs = knn_entropy(&x.map(|v| a * v).unwrap(), &cfg).unwrap();
        prop_assert!((hs - h - dim as f64 * a.ln()).abs() < 1e-9, "{} {}", hs - h, dim as f64 * a.ln());
    }
}
