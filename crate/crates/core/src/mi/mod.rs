//! Nonparametric entropy and mutual information from k-nearest neighbors.
//!
//! Both estimators work under the max norm. Inputs are first perturbed by a
//! tiny deterministic multiplicative jitter so that exact duplicates (common
//! after clamping) do not produce zero neighbor distances.

mod digamma;
pub mod neighbors;

pub use digamma::{digamma, EULER_MASCHERONI};
use digamma::digamma_unchecked;
use neighbors::{BruteForce, KdTree, NeighborIndex};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng;
use crate::sample::SampleMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NeighborSearch {
    #[default]
    KdTree,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub jitter_scale: f64,
    pub jitter_seed: u64,
    #[serde(default)]
    pub search: NeighborSearch,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 6, jitter_scale: 1e-10, jitter_seed: 0x5eed, search: NeighborSearch::KdTree }
    }
}

impl KnnConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.k < 1 {
            return Err(invalid("k must be >= 1"));
        }
        if n < self.k + 1 {
            return Err(invalid(format!("need at least k + 1 = {} samples, got {n}", self.k + 1)));
        }
        Ok(())
    }
}

/// Multiplicative jitter `v * (1 + s*u)`, additive `s*u` at exact zeros.
/// `u` depends only on the seed and the value's position.
fn jitter(x: &SampleMatrix, cfg: &KnnConfig) -> Vec<f64> {
    let cols = x.cols();
    x.as_slice()
        .iter()
        .enumerate()
        .map(|(flat, &v)| {
            let u = rng::hashed_unit(cfg.jitter_seed, &[(flat / cols) as u64, (flat % cols) as u64]);
            if v == 0.0 {
                cfg.jitter_scale * u
            } else {
                v * (1.0 + cfg.jitter_scale * u)
            }
        })
        .collect()
}

fn with_index<T>(
    data: &[f64],
    dim: usize,
    search: NeighborSearch,
    f: impl FnOnce(&(dyn NeighborIndex + Sync)) -> T,
) -> T {
    match search {
        NeighborSearch::KdTree => f(&KdTree::new(data, dim)),
        NeighborSearch::BruteForce => f(&BruteForce::new(data, dim)),
    }
}

/// Kozachenko-Leonenko differential entropy (nats) under the max norm:
/// `psi(N) - psi(k) + dim * mean(ln(2 * rho_i))`, with `rho_i` the distance
/// from sample `i` to its k-th neighbor.
pub fn knn_entropy(x: &SampleMatrix, cfg: &KnnConfig) -> Result<f64> {
    let n = x.rows();
    cfg.check(n)?;
    let dim = x.cols();
    let data = jitter(x, cfg);
    let dists = with_index(&data, dim, cfg.search, |idx| {
        par::map(n, |i| idx.kth_distance(i, cfg.k))
    });
    let mut sum = 0.0;
    for (i, &rho) in dists.iter().enumerate() {
        if rho <= 0.0 {
            return Err(Error::DegenerateNeighbors { index: i });
        }
        sum += (2.0 * rho).ln();
    }
    Ok(digamma_unchecked(n as u64) - digamma_unchecked(cfg.k as u64) + dim as f64 * sum / n as f64)
}

/// Kraskov-Stoegbauer-Grassberger mutual information (first variant), nats.
///
/// Joint distances use the max norm over both blocks; marginal counts are
/// strict (`< eps_i`). May be slightly negative for independent inputs.
pub fn ksg_mi(x: &SampleMatrix, y: &SampleMatrix, cfg: &KnnConfig) -> Result<f64> {
    let n = x.rows();
    if y.rows() != n {
        return Err(invalid(format!("sample counts differ: {n} vs {}", y.rows())));
    }
    cfg.check(n)?;
    let xj = jitter(x, cfg);
    let yj = jitter(y, cfg);
    let (dx, dy) = (x.cols(), y.cols());
    let mut joint = Vec::with_capacity(n * (dx + dy));
    for i in 0..n {
        joint.extend_from_slice(&xj[i * dx..(i + 1) * dx]);
        joint.extend_from_slice(&yj[i * dy..(i + 1) * dy]);
    }
    let eps = with_index(&joint, dx + dy, cfg.search, |idx| {
        par::map(n, |i| idx.kth_distance(i, cfg.k))
    });
    if let Some(index) = eps.iter().position(|&e| e <= 0.0) {
        return Err(Error::DegenerateNeighbors { index });
    }
    let nx = with_index(&xj, dx, cfg.search, |idx| par::map(n, |i| idx.count_within(i, eps[i])));
    let ny = with_index(&yj, dy, cfg.search, |idx| par::map(n, |i| idx.count_within(i, eps[i])));
    let mut acc = 0.0;
    for i in 0..n {
        acc += digamma_unchecked(nx[i] as u64 + 1) + digamma_unchecked(ny[i] as u64 + 1);
    }
    Ok(digamma_unchecked(cfg.k as u64) + digamma_unchecked(n as u64) - acc / n as f64)
}
