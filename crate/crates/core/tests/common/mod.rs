#![allow(dead_code)]

use mi_placement::rng;
use mi_placement::SampleMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

pub fn uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// Unit-variance pair with correlation `rho`.
pub fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (SampleMatrix, SampleMatrix) {
    let a = normals(n, rng::derive_seed(seed, &[0]));
    let b = normals(n, rng::derive_seed(seed, &[1]));
    let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b).collect();
    (SampleMatrix::from_column(&a).unwrap(), SampleMatrix::from_column(&y).unwrap())
}

pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

pub fn columns(cols: &[Vec<f64>]) -> SampleMatrix {
    let n = cols[0].len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    SampleMatrix::from_rows(&rows).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Each column shifted to zero mean and scaled to unit sample std.
pub fn standardized(m: &SampleMatrix) -> SampleMatrix {
    let cols: Vec<Vec<f64>> = (0..m.cols())
        .map(|j| {
            let c = m.column(j);
            let (mu, s) = (mean(&c), std(&c));
            c.iter().map(|v| (v - mu) / s).collect()
        })
        .collect();
    columns(&cols)
}
