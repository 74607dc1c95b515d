//! Gaussian-process surrogate with a squared-exponential kernel.
//!
//! The kernel is `s2 * exp(-sum_j (x_j - x'_j)^2 / lambda_j)` (no factor 1/2
//! in the exponent). Targets are standardized internally and the prior mean
//! is zero in standardized units. Hyperparameters maximize the log marginal
//! likelihood by multi-start compass search in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng;

/// Noise variance never drops below this fraction of the signal variance.
pub const NOISE_FLOOR_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub evals_per_restart: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 8, evals_per_restart: 200, seed: 0x6a9 }
    }
}

pub fn se_kernel(x: &[f64], x2: &[f64], lengthscales: &[f64], signal_var: f64) -> Result<f64> {
    if x.len() != x2.len() || x.len() != lengthscales.len() {
        return Err(invalid("kernel dimension mismatch"));
    }
    if lengthscales.iter().any(|&l| !(l > 0.0)) {
        return Err(invalid("lengthscales must be positive"));
    }
    Ok(kernel(x, x2, lengthscales, signal_var))
}

fn kernel(x: &[f64], x2: &[f64], ls: &[f64], s2: f64) -> f64 {
    let q: f64 = x.iter().zip(x2).zip(ls).map(|((a, b), l)| (a - b) * (a - b) / l).sum();
    s2 * (-q).exp()
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    train_x: Vec<Vec<f64>>,
    train_f: Vec<f64>,
    lengthscales: Vec<f64>,
    /// In standardized target units.
    signal_var: f64,
    noise_var: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl GpSurrogate {
    /// Prior-only surrogate: mean 0, variance `signal_var` everywhere.
    pub fn prior(lengthscales: Vec<f64>, signal_var: f64) -> Result<Self> {
        Self::with_hyperparams(Vec::new(), Vec::new(), lengthscales, signal_var, signal_var * NOISE_FLOOR_RATIO)
    }

    /// Conditions on data with fixed hyperparameters (raw target units, no standardization).
    pub fn with_hyperparams(
        train_x: Vec<Vec<f64>>,
        train_f: Vec<f64>,
        lengthscales: Vec<f64>,
        signal_var: f64,
        noise_var: f64,
    ) -> Result<Self> {
        Self::build(train_x, train_f, lengthscales, signal_var, noise_var, 0.0, 1.0)
    }

    fn build(
        train_x: Vec<Vec<f64>>,
        train_f: Vec<f64>,
        lengthscales: Vec<f64>,
        signal_var: f64,
        noise_var: f64,
        y_mean: f64,
        y_scale: f64,
    ) -> Result<Self> {
        if train_x.len() != train_f.len() {
            return Err(invalid("train_x and train_f lengths differ"));
        }
        if lengthscales.iter().any(|&l| !(l > 0.0)) || !(signal_var > 0.0) || !(noise_var > 0.0) {
            return Err(invalid("hyperparameters must be positive"));
        }
        if train_x.iter().any(|x| x.len() != lengthscales.len()) {
            return Err(invalid("training point dimension mismatch"));
        }
        let y = DVector::from_iterator(train_f.len(), train_f.iter().map(|f| (f - y_mean) / y_scale));
        let (chol, alpha) = if train_x.is_empty() {
            (None, DVector::zeros(0))
        } else {
            let k = gram(&train_x, &lengthscales, signal_var, noise_var);
            let chol = Cholesky::new(k).ok_or(Error::SingularKernel)?;
            let alpha = chol.solve(&y);
            (Some(chol), alpha)
        };
        Ok(Self { train_x, train_f, lengthscales, signal_var, noise_var, y_mean, y_scale, chol, alpha })
    }

    /// Maximum-likelihood fit of lengthscales, signal and noise variance.
    pub fn fit(train_x: &[Vec<f64>], train_f: &[f64], opts: &FitOptions) -> Result<Self> {
        if train_x.len() != train_f.len() || train_x.is_empty() {
            return Err(invalid("fit needs matching, non-empty training data"));
        }
        let dim = train_x[0].len();
        if dim == 0 || train_x.iter().any(|x| x.len() != dim) {
            return Err(invalid("training points must share a positive dimension"));
        }
        if train_f.iter().chain(train_x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite training data"));
        }
        let distinct = train_x.iter().skip(1).any(|x| x != &train_x[0]);
        if !distinct {
            return Err(invalid("fit needs at least two distinct training points"));
        }
        let n = train_f.len() as f64;
        let y_mean = train_f.iter().sum::<f64>() / n;
        let var = train_f.iter().map(|f| (f - y_mean).powi(2)).sum::<f64>() / n;
        let extents: Vec<f64> = (0..dim)
            .map(|j| {
                let (lo, hi) = train_x
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
                if hi > lo { hi - lo } else { 1.0 }
            })
            .collect();
        let xs = train_x.to_vec();
        if var <= 1e-24 * (1.0 + y_mean * y_mean) {
            let ls = extents.iter().map(|e| (0.25 * e).powi(2)).collect();
            return Self::build(xs, train_f.to_vec(), ls, 1.0, NOISE_FLOOR_RATIO, y_mean, 1.0);
        }
        let y_scale = var.sqrt();
        let y: Vec<f64> = train_f.iter().map(|f| (f - y_mean) / y_scale).collect();
        let space = SearchSpace::new(&extents);
        let runs = par::map(opts.restarts.max(1), |r| {
            let start = if r == 0 {
                space.default_start()
            } else {
                space.random_start(&mut rng::stream(rng::derive_seed(opts.seed, &[r as u64])))
            };
            compass_search(&space, start, opts.evals_per_restart, |p| log_marginal(&xs, &y, p))
        });
        let best = runs
            .into_iter()
            .fold(None::<(Vec<f64>, f64)>, |acc, run| match acc {
                Some(a) if a.1 >= run.1 => Some(a),
                _ => Some(run),
            })
            .filter(|b| b.1.is_finite())
            .ok_or(Error::SingularKernel)?;
        let (ls, s2, nv) = space.unpack(&best.0);
        Self::build(xs, train_f.to_vec(), ls, s2, nv, y_mean, y_scale)
    }

    /// Predictive mean and variance (output units) at each query point.
    pub fn predict(&self, x_new: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let scale2 = self.y_scale * self.y_scale;
        let mut means = Vec::with_capacity(x_new.len());
        let mut vars = Vec::with_capacity(x_new.len());
        for x in x_new {
            let prior = self.signal_var;
            let Some(chol) = &self.chol else {
                means.push(self.y_mean);
                vars.push(prior * scale2);
                continue;
            };
            let ks = DVector::from_iterator(
                self.train_x.len(),
                self.train_x.iter().map(|t| kernel(x, t, &self.lengthscales, self.signal_var)),
            );
            let mu = ks.dot(&self.alpha);
            let v = chol.l().solve_lower_triangular(&ks).unwrap_or_else(|| DVector::zeros(ks.len()));
            let var = (prior - v.norm_squared()).max(0.0);
            means.push(mu * self.y_scale + self.y_mean);
            vars.push(var * scale2);
        }
        (means, vars)
    }

    pub fn predict_one(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict(std::slice::from_ref(&x.to_vec()));
        (m[0], v[0])
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_var * self.y_scale * self.y_scale
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var * self.y_scale * self.y_scale
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_f(&self) -> &[f64] {
        &self.train_f
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

fn gram(xs: &[Vec<f64>], ls: &[f64], s2: f64, noise: f64) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(&xs[i], &xs[j], ls, s2);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise;
    }
    k
}

/// Log-parameter box: `[ln lambda_1..ln lambda_D, ln s2, ln(noise / s2)]`.
struct SearchSpace {
    lo: Vec<f64>,
    hi: Vec<f64>,
    default: Vec<f64>,
}

impl SearchSpace {
    fn new(extents: &[f64]) -> Self {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut default = Vec::new();
        for &e in extents {
            lo.push(((1e-2 * e).powi(2)).ln());
            hi.push(((10.0 * e).powi(2)).ln());
            default.push(((0.25 * e).powi(2)).ln());
        }
        lo.extend([1e-2f64.ln(), NOISE_FLOOR_RATIO.ln()]);
        hi.extend([1e2f64.ln(), 1.0f64.ln()]);
        default.extend([0.0, 1e-4f64.ln()]);
        Self { lo, hi, default }
    }

    fn default_start(&self) -> Vec<f64> {
        self.default.clone()
    }

    fn random_start(&self, r: &mut rng::Stream) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| r.random_range(*l..*h)).collect()
    }

    fn clamp(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn unpack(&self, p: &[f64]) -> (Vec<f64>, f64, f64) {
        let d = p.len() - 2;
        let s2 = p[d].exp();
        (p[..d].iter().map(|v| v.exp()).collect(), s2, s2 * p[d + 1].exp())
    }
}

fn log_marginal(xs: &[Vec<f64>], y: &[f64], p: &[f64]) -> f64 {
    let d = p.len() - 2;
    let ls: Vec<f64> = p[..d].iter().map(|v| v.exp()).collect();
    let s2 = p[d].exp();
    let k = gram(xs, &ls, s2, s2 * p[d + 1].exp());
    let Some(chol) = Cholesky::new(k) else {
        return f64::NEG_INFINITY;
    };
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let n = y.len() as f64;
    let v = -0.5 * yv.dot(&alpha) - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    if v.is_finite() { v } else { f64::NEG_INFINITY }
}

/// Coordinate-wise pattern search; returns the best point and its value.
fn compass_search(
    space: &SearchSpace,
    mut x: Vec<f64>,
    budget: usize,
    f: impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    space.clamp(&mut x);
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = 1.0;
    while evals < budget && step > 1e-3 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let mut y = x.clone();
                y[i] += dir * step;
                space.clamp(&mut y);
                if y[i] == x[i] {
                    continue;
                }
                let fy = f(&y);
                evals += 1;
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}
