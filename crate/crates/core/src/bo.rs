//! Bayesian optimization with expected improvement.
//!
//! The loop evaluates a Latin-hypercube initial design, then repeatedly fits
//! the GP surrogate, maximizes EI over quasi-random candidates refined by a
//! local coordinate search, and evaluates the proposal. The incumbent is the
//! best of all evaluations.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::gp::{FitOptions, GpSurrogate};
use crate::par;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub init_count: usize,
    pub iter_count: usize,
    pub acq_candidates: usize,
    pub seed: u64,
}

impl BoConfig {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, seed: u64) -> Self {
        Self { lower, upper, init_count: 10, iter_count: 30, acq_candidates: 2048, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(invalid("box bounds must be non-empty and of equal length"));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l)) {
            return Err(invalid("box must be non-degenerate"));
        }
        if self.init_count < 2 || self.acq_candidates < 1 {
            return Err(invalid("need init_count >= 2 and acq_candidates >= 1"));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub incumbent: usize,
}

impl BoTrace {
    pub fn incumbent_point(&self) -> &[f64] {
        &self.points[self.incumbent]
    }

    pub fn incumbent_value(&self) -> f64 {
        self.values[self.incumbent]
    }

    /// Best value seen after each evaluation.
    pub fn running_best(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(f64::NEG_INFINITY, |best, &v| {
                *best = best.max(v);
                Some(*best)
            })
            .collect()
    }

    /// CSV with columns `iteration, x0.., objective, incumbent`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["iteration".to_string()];
        header.extend((0..dim).map(|j| format!("x{j}")));
        header.extend(["objective".into(), "incumbent".into()]);
        out.write_record(&header)?;
        for (i, ((p, v), b)) in self.points.iter().zip(&self.values).zip(self.running_best()).enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(p.iter().map(|x| x.to_string()));
            rec.push(v.to_string());
            rec.push(b.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `sigma * (z * Phi(z) + phi(z))` with `z = (mu - f_best) / sigma`; zero when `sigma == 0`.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    if !(sigma > 0.0) {
        return 0.0;
    }
    let z = (mu - f_best) / sigma;
    (sigma * (z * norm_cdf(z) + norm_pdf(z))).max(0.0)
}

/// Latin-hypercube sample of `n` points in the box.
pub fn latin_hypercube(n: usize, lower: &[f64], upper: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed);
    let dim = lower.len();
    let mut pts = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, r.random_range(0..=i));
        }
        for (i, s) in strata.into_iter().enumerate() {
            let u = (s as f64 + r.random::<f64>()) / n as f64;
            pts[i][j] = lower[j] + u * (upper[j] - lower[j]);
        }
    }
    pts
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points with a seeded Cranley-Patterson shift.
pub fn halton(n: usize, lower: &[f64], upper: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed);
    let shift: Vec<f64> = (0..lower.len()).map(|_| r.random::<f64>()).collect();
    (0..n)
        .map(|i| {
            (0..lower.len())
                .map(|j| {
                    let u = (radical_inverse(i as u64 + 1, PRIMES[j % PRIMES.len()]) + shift[j]).fract();
                    lower[j] + u * (upper[j] - lower[j])
                })
                .collect()
        })
        .collect()
}

fn ei_at(g: &GpSurrogate, x: &[f64], f_best: f64) -> f64 {
    let (m, v) = g.predict_one(x);
    expected_improvement(m, v.sqrt(), f_best)
}

/// EI maximizer over `acq_candidates` Halton points plus local refinement.
///
/// Ties go to the lowest candidate index.
pub fn propose_next(g: &GpSurrogate, cfg: &BoConfig, f_best: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if g.dim() != cfg.dim() {
        return Err(invalid("surrogate and box dimensions differ"));
    }
    let cands = halton(cfg.acq_candidates, &cfg.lower, &cfg.upper, cfg.seed);
    let scores = par::map(cands.len(), |i| ei_at(g, &cands[i], f_best));
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let mut x = cands[best].clone();
    let mut fx = scores[best];
    if fx <= 0.0 {
        return Ok(x);
    }
    let mut steps: Vec<f64> = cfg.lower.iter().zip(&cfg.upper).map(|(l, u)| 0.05 * (u - l)).collect();
    for _ in 0..40 {
        let mut improved = false;
        for j in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] += dir * steps[j];
                cfg.clamp(&mut y);
                let fy = ei_at(g, &y, f_best);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok(x)
}

/// Runs the full loop on `objective`; errors carry the failing point.
pub fn maximize<F>(objective: F, cfg: &BoConfig) -> Result<BoTrace>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let eval = |x: &[f64]| -> Result<f64> {
        match objective(x) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::Objective {
                point: x.to_vec(),
                source: Box::new(invalid(format!("non-finite objective value {v}"))),
            }),
            Err(e) => Err(Error::Objective { point: x.to_vec(), source: Box::new(e) }),
        }
    };
    let mut points = latin_hypercube(cfg.init_count, &cfg.lower, &cfg.upper, rng::derive_seed(cfg.seed, &[0]));
    let mut values = par::try_map(points.len(), |i| eval(&points[i]))?;
    let fit_opts = FitOptions { seed: rng::derive_seed(cfg.seed, &[1]), ..FitOptions::default() };
    for j in 0..cfg.iter_count {
        let g = GpSurrogate::fit(&points, &values, &fit_opts)?;
        let f_best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let round = BoConfig { seed: rng::derive_seed(cfg.seed, &[2, j as u64]), ..cfg.clone() };
        let x = propose_next(&g, &round, f_best)?;
        let v = eval(&x)?;
        points.push(x);
        values.push(v);
    }
    let mut incumbent = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[incumbent] {
            incumbent = i;
        }
    }
    Ok(BoTrace { points, values, incumbent })
}
