//! Release scenario in internal units (meters, seconds, radians).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cca::Ridge;
use crate::dispersion::{MeteoConfig, ObservationModel, Point, Release, ScenarioParams};
use crate::error::{invalid, Result};
use crate::mi::KnnConfig;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DomainBox {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn lower(&self) -> Vec<f64> {
        vec![self.x_min, self.y_min]
    }

    pub fn upper(&self) -> Vec<f64> {
        vec![self.x_max, self.y_max]
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    pub fn random_point(&self, r: &mut rng::Stream) -> Point {
        [r.random_range(self.x_min..=self.x_max), r.random_range(self.y_min..=self.y_max)]
    }
}

/// Regular grid of `nx x ny` nodes spanning the domain, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Nodes ordered by x, then y (lexicographic).
    pub fn nodes(&self, domain: &DomainBox) -> Vec<Point> {
        let coord = |lo: f64, hi: f64, n: usize, i: usize| {
            if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }
        };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                out.push([
                    coord(domain.x_min, domain.x_max, self.nx, i),
                    coord(domain.y_min, domain.y_max, self.ny, j),
                ]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub domain: DomainBox,
    /// x coordinate of the (north-south) pipeline.
    pub pipeline_x: f64,
    pub pipeline_y: (f64, f64),
    /// `wind_dir` here is the prior mean.
    pub meteo: MeteoConfig,
    pub wind_dir_std: f64,
    pub schedule: Vec<Release>,
    pub obs: ObservationModel,
    /// Observation instants used to score placements.
    pub placement_times: Vec<f64>,
    /// Observation instants assimilated by the filter.
    pub assimilation_times: Vec<f64>,
    pub knn: KnnConfig,
    pub ridge: Ridge,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.meteo.validate()?;
        self.obs.validate()?;
        let d = &self.domain;
        if !(d.x_max > d.x_min && d.y_max > d.y_min) {
            return Err(invalid("domain box is degenerate"));
        }
        if !(self.pipeline_y.1 > self.pipeline_y.0) {
            return Err(invalid("pipeline must span a positive length"));
        }
        if !(self.wind_dir_std >= 0.0) {
            return Err(invalid("wind direction prior std must be >= 0"));
        }
        if self.placement_times.is_empty() || self.assimilation_times.is_empty() {
            return Err(invalid("observation time lists must be non-empty"));
        }
        Ok(())
    }

    /// Draws `n` parameter vectors from the prior.
    pub fn sample_prior(&self, n: usize, seed: u64) -> Result<Vec<ScenarioParams>> {
        let wind = Normal::new(self.meteo.wind_dir, self.wind_dir_std)
            .map_err(|e| invalid(format!("wind prior: {e}")))?;
        let mut r = rng::stream(seed);
        let (lo, hi) = self.pipeline_y;
        Ok((0..n)
            .map(|_| ScenarioParams { release_y: r.random_range(lo..=hi), wind_dir: wind.sample(&mut r) })
            .collect())
    }

    pub fn source(&self, params: &ScenarioParams) -> Point {
        [self.pipeline_x, params.release_y]
    }
}
