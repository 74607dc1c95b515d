//! Two-dimensional Gaussian-puff dispersion.
//!
//! A release is a sequence of circular puffs. Each puff is advected by a
//! spatially uniform wind and grows as `r = p_y * s^q_y` with travelled
//! distance `s`. The concentration at a point is the sum of the isotropic
//! Gaussian footprints of every puff that has been transported at least once.
//! Sensors report `ln(c) + eps` with normal log-noise.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// East/north position in meters.
pub type Point = [f64; 2];

const CLOCK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PuffState {
    pub x: f64,
    pub y: f64,
    /// Travelled distance (m).
    pub s: f64,
    /// Radius, i.e. the Gaussian standard deviation (m).
    pub r: f64,
    pub mass: f64,
}

impl PuffState {
    /// A puff at its release instant: no transport yet, zero radius.
    pub fn released(at: Point, mass: f64) -> Self {
        Self { x: at[0], y: at[1], s: 0.0, r: 0.0, mass }
    }

    fn peak(&self) -> f64 {
        self.mass / (2.0 * PI * self.r * self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteoConfig {
    /// m/s
    pub wind_speed: f64,
    /// Direction the wind blows toward, radians counter-clockwise from east.
    pub wind_dir: f64,
    pub p_y: f64,
    pub q_y: f64,
    /// Transport step (s).
    pub dt: f64,
}

impl MeteoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.wind_speed > 0.0
            && self.dt > 0.0
            && self.p_y > 0.0
            && self.q_y > 0.0
            && self.q_y <= 1.0
            && self.wind_dir.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("meteo config out of range: {self:?}")))
        }
    }

    pub fn with_wind_dir(&self, wind_dir: f64) -> Self {
        Self { wind_dir, ..*self }
    }
}

/// One draw of the unknowns: release position along the pipeline and wind direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// m, along the pipeline
    pub release_y: f64,
    /// rad
    pub wind_dir: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub noise_mean: f64,
    pub noise_std: f64,
    pub conc_floor: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        Self { noise_mean: -0.005, noise_std: 0.1, conc_floor: 1e-12 }
    }
}

impl ObservationModel {
    /// Same clamp, zero noise.
    pub fn noise_free(&self) -> Self {
        Self { noise_mean: 0.0, noise_std: 0.0, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        // noise_std == 0 is accepted as the noise-off limit.
        if self.noise_std >= 0.0 && self.conc_floor > 0.0 && self.noise_mean.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("observation model out of range: {self:?}")))
        }
    }

    /// Clamped log-concentration without noise.
    pub fn log_conc(&self, c: f64) -> f64 {
        c.max(self.conc_floor).ln()
    }

    fn noise(&self) -> Result<Normal<f64>> {
        Normal::new(self.noise_mean, self.noise_std)
            .map_err(|e| invalid(format!("noise distribution: {e}")))
    }
}

/// A scheduled puff emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Release {
    /// s
    pub time: f64,
    pub mass: f64,
}

/// Regular schedule: `count` puffs of `mass`, one every `interval` seconds from t = 0.
pub fn regular_schedule(count: usize, interval: f64, mass: f64) -> Vec<Release> {
    (0..count).map(|i| Release { time: i as f64 * interval, mass }).collect()
}

pub fn step_puff(p: &PuffState, m: &MeteoConfig) -> PuffState {
    let travel = m.wind_speed * m.dt;
    let s = p.s + travel;
    PuffState {
        x: p.x + m.wind_speed * m.wind_dir.cos() * m.dt,
        y: p.y + m.wind_speed * m.wind_dir.sin() * m.dt,
        s,
        r: m.p_y * s.powf(m.q_y),
        mass: p.mass,
    }
}

/// Sum of the Gaussian footprints of `puffs` at `at`.
///
/// Fails on a puff with zero radius.
pub fn concentration(puffs: &[PuffState], at: Point) -> Result<f64> {
    let mut c = 0.0;
    for p in puffs {
        if p.r <= 0.0 {
            return Err(Error::ZeroRadius);
        }
        c += footprint(p, at);
    }
    Ok(c)
}

fn footprint(p: &PuffState, at: Point) -> f64 {
    let dx = p.x - at[0];
    let dy = p.y - at[1];
    p.peak() * (-(dx * dx + dy * dy) / (2.0 * p.r * p.r)).exp()
}

/// Puffs emitted from one source, advanced on a fixed `dt` clock starting at t = 0.
///
/// Releases whose time falls between clock ticks are emitted at the next tick.
#[derive(Debug, Clone, PartialEq)]
pub struct PuffField {
    source: Point,
    ticks: u64,
    puffs: Vec<PuffState>,
    next_release: usize,
}

impl PuffField {
    pub fn new(source: Point, schedule: &[Release]) -> Self {
        let mut field = Self { source, ticks: 0, puffs: Vec::new(), next_release: 0 };
        field.spawn_due(0.0, schedule);
        field
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.ticks as f64 * dt
    }

    pub fn puffs(&self) -> &[PuffState] {
        &self.puffs
    }

    pub fn source(&self) -> Point {
        self.source
    }

    fn spawn_due(&mut self, now: f64, schedule: &[Release]) {
        while let Some(rel) = schedule.get(self.next_release) {
            if rel.time > now + CLOCK_TOL {
                break;
            }
            self.puffs.push(PuffState::released(self.source, rel.mass));
            self.next_release += 1;
        }
    }

    /// Advances to time `t` (a multiple of `meteo.dt`, not in the past).
    pub fn advance_to(&mut self, t: f64, meteo: &MeteoConfig, schedule: &[Release]) -> Result<()> {
        let target = t / meteo.dt;
        let target_ticks = target.round();
        if (target - target_ticks).abs() > 1e-6 || target_ticks < self.ticks as f64 {
            return Err(invalid(format!(
                "time {t} s is not a future multiple of dt = {} s",
                meteo.dt
            )));
        }
        while (self.ticks as f64) < target_ticks {
            for p in &mut self.puffs {
                *p = step_puff(p, meteo);
            }
            self.ticks += 1;
            self.spawn_due(self.time(meteo.dt), schedule);
        }
        Ok(())
    }

    /// Concentration from puffs that have been transported at least once.
    pub fn concentration(&self, at: Point) -> f64 {
        self.puffs.iter().filter(|p| p.r > 0.0).map(|p| footprint(p, at)).sum()
    }

    /// Shifts the source and every existing puff. Dispersion is translation
    /// equivariant, so this equals re-simulating from the shifted source.
    pub fn translate(&mut self, dx: f64, dy: f64) {
        self.source[0] += dx;
        self.source[1] += dy;
        for p in &mut self.puffs {
            p.x += dx;
            p.y += dy;
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.puffs.iter().map(|p| p.mass).sum()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("no observation times"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("observation times must be strictly increasing"));
    }
    Ok(())
}

/// Puff states at every observation time for one scenario.
pub fn puff_snapshots(
    source_x: f64,
    params: &ScenarioParams,
    meteo: &MeteoConfig,
    times: &[f64],
    schedule: &[Release],
) -> Result<Vec<PuffField>> {
    meteo.validate()?;
    check_times(times)?;
    let meteo = meteo.with_wind_dir(params.wind_dir);
    let mut field = PuffField::new([source_x, params.release_y], schedule);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        field.advance_to(t, &meteo, schedule)?;
        out.push(field.clone());
    }
    Ok(out)
}

/// Noisy log-observations of one sensor over precomputed snapshots.
///
/// The noise stream is seeded by `seed` and drawn in time order.
pub fn observe_snapshots(
    snapshots: &[PuffField],
    sensor: Point,
    obs: &ObservationModel,
    seed: u64,
) -> Result<Vec<f64>> {
    let noise = obs.noise()?;
    let mut rng = rng::stream(seed);
    Ok(snapshots
        .iter()
        .map(|f| obs.log_conc(f.concentration(sensor)) + noise.sample(&mut rng))
        .collect())
}

/// Log-observation matrix `[sensor x time]` for one scenario draw.
///
/// Puffs are emitted from `(0, release_y)`. Each sensor row uses its own
/// noise stream derived from `seed` and the sensor index.
pub fn simulate_observations(
    params: &ScenarioParams,
    meteo: &MeteoConfig,
    sensors: &[Point],
    times: &[f64],
    schedule: &[Release],
    obs: &ObservationModel,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if sensors.is_empty() {
        return Err(invalid("no sensors"));
    }
    obs.validate()?;
    let snaps = puff_snapshots(0.0, params, meteo, times, schedule)?;
    let mut out = DMatrix::zeros(sensors.len(), times.len());
    for (i, &s) in sensors.iter().enumerate() {
        let row = observe_snapshots(&snaps, s, obs, sensor_seed(seed, i))?;
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Seed of sensor `index`'s noise stream inside [`simulate_observations`].
pub fn sensor_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, &[index as u64])
}
