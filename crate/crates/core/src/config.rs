//! Experiment configuration as read from JSON.
//!
//! Distances are in km, angles in degrees and times in minutes. Everything
//! is converted to meters, radians and seconds by [`ExperimentConfig::to_scenario`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cca::Ridge;
use crate::dispersion::{regular_schedule, MeteoConfig, ObservationModel};
use crate::error::{Error, Result};
use crate::mi::KnnConfig;
use crate::rng;
use crate::scenario::{DomainBox, GridSpec, Scenario};

const KM: f64 = 1000.0;
const MIN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainKm {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// North-south pipeline at `x` from `y_start` to `y_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineKm {
    pub x: f64,
    pub y_start: f64,
    pub y_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeteoSpec {
    pub wind_speed_ms: f64,
    /// Prior mean of the direction the wind blows toward, counter-clockwise from east.
    pub wind_dir_mean_deg: f64,
    pub wind_dir_std_deg: f64,
    pub p_y: f64,
    pub q_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub total_min: f64,
    pub interval_min: f64,
    pub release_duration_min: f64,
    pub puff_mass: f64,
    /// Observation instants used when scoring placements.
    pub placement_steps: usize,
    /// Observation instants assimilated by the filter.
    pub assimilation_steps: usize,
    /// How a reduced step count picks instants from the full record.
    #[serde(default)]
    pub subset: StepSubset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSubset {
    /// The first `n` instants.
    #[default]
    Leading,
    /// Every `full / n`-th instant, spanning the whole record.
    Strided,
}

impl TimeSpec {
    /// Number of sampling instants `t_1..t_n` in the full record.
    pub fn full_steps(&self) -> usize {
        (self.total_min / self.interval_min).round() as usize + 1
    }

    /// `n` instants taken from the full record (seconds).
    pub fn instants(&self, n: usize) -> Vec<f64> {
        let full = self.full_steps();
        let n = n.min(full);
        let stride = match self.subset {
            StepSubset::Strided => full / n,
            StepSubset::Leading => 1,
        };
        (1..=n).map(|k| (k * stride) as f64 * self.interval_min * MIN).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub placement_members: usize,
    pub enkf_members: usize,
    pub inflation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoSpec {
    pub init_count: usize,
    pub iter_count: usize,
    pub acq_candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub n_sensors: usize,
    pub min_sep_km: f64,
    pub grid_nx: usize,
    pub grid_ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub random_placements: usize,
    pub conditions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub ensemble: u64,
    pub bo: u64,
    pub assimilation: u64,
    pub evaluation: u64,
}

impl Seeds {
    /// Replaces every seed with a stream derived from `base`.
    pub fn from_base(base: u64) -> Self {
        Self {
            ensemble: rng::derive_seed(base, &[0]),
            bo: rng::derive_seed(base, &[1]),
            assimilation: rng::derive_seed(base, &[2]),
            evaluation: rng::derive_seed(base, &[3]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain_km: DomainKm,
    pub pipeline_km: PipelineKm,
    pub meteo: MeteoSpec,
    pub times: TimeSpec,
    pub noise: NoiseSpec,
    pub ensemble: EnsembleSpec,
    pub knn_k: usize,
    pub ridge: f64,
    pub bo: BoSpec,
    pub placement: PlacementSpec,
    pub evaluation: EvaluationSpec,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain_km: DomainKm { x_min: -5.0, x_max: 5.0, y_min: -10.0, y_max: 10.0 },
            pipeline_km: PipelineKm { x: 0.0, y_start: -3.0, y_end: 3.0 },
            meteo: MeteoSpec { wind_speed_ms: 4.0, wind_dir_mean_deg: 0.0, wind_dir_std_deg: 10.0, p_y: 0.466, q_y: 0.866 },
            times: TimeSpec {
                total_min: 30.0,
                interval_min: 1.0,
                release_duration_min: 10.0,
                puff_mass: 1.0,
                placement_steps: 31,
                assimilation_steps: 31,
                subset: StepSubset::Leading,
            },
            noise: NoiseSpec { mean: -0.005, std: 0.1, floor: 1e-12 },
            ensemble: EnsembleSpec { placement_members: 1000, enkf_members: 1000, inflation: 1.0 },
            knn_k: 6,
            ridge: 1e-8,
            bo: BoSpec { init_count: 10, iter_count: 30, acq_candidates: 2048 },
            placement: PlacementSpec { n_sensors: 3, min_sep_km: 0.5, grid_nx: 11, grid_ny: 21 },
            evaluation: EvaluationSpec { random_placements: 20, conditions: 50 },
            seeds: Seeds::from_base(2024),
        }
    }
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.apply_profile(Profile::Desk);
        c
    }

    /// Overrides ensemble sizes, step counts and evaluation sizes.
    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Desk => {
                self.ensemble.placement_members = 500;
                self.ensemble.enkf_members = 500;
                self.times.placement_steps = 10;
                self.times.assimilation_steps = 10;
                self.evaluation = EvaluationSpec { random_placements: 10, conditions: 10 };
            }
            Profile::Full => {
                self.ensemble.placement_members = 1000;
                self.ensemble.enkf_members = 1000;
                let full = self.times.full_steps();
                self.times.placement_steps = full;
                self.times.assimilation_steps = full;
                self.evaluation = EvaluationSpec { random_placements: 20, conditions: 50 };
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let d = &self.domain_km;
        let p = &self.pipeline_km;
        let t = &self.times;
        if !(d.x_max > d.x_min && d.y_max > d.y_min) {
            return fail("domain box must have positive extent");
        }
        if !(p.y_end > p.y_start) || !(p.x >= d.x_min && p.x <= d.x_max) {
            return fail("pipeline must have positive length and lie inside the domain");
        }
        if !(p.y_start >= d.y_min && p.y_end <= d.y_max) {
            return fail("pipeline must lie inside the domain");
        }
        if !(self.meteo.wind_speed_ms > 0.0 && self.meteo.wind_dir_std_deg >= 0.0) {
            return fail("wind speed must be positive and wind-direction std non-negative");
        }
        if !(self.meteo.p_y > 0.0 && self.meteo.q_y > 0.0 && self.meteo.q_y <= 1.0) {
            return fail("need p_y > 0 and 0 < q_y <= 1");
        }
        if !(t.total_min > 0.0 && t.interval_min > 0.0 && t.interval_min <= t.total_min) {
            return fail("need 0 < interval_min <= total_min");
        }
        if !(t.release_duration_min > 0.0 && t.release_duration_min <= t.total_min && t.puff_mass > 0.0) {
            return fail("need 0 < release_duration_min <= total_min and puff_mass > 0");
        }
        if t.placement_steps == 0 || t.assimilation_steps == 0 {
            return fail("step counts must be positive");
        }
        if t.placement_steps > t.full_steps() || t.assimilation_steps > t.full_steps() {
            return fail("step counts exceed the number of sampling instants");
        }
        if !(self.noise.std >= 0.0 && self.noise.floor > 0.0 && self.noise.mean.is_finite()) {
            return fail("need noise std >= 0 and floor > 0");
        }
        if self.ensemble.placement_members < 50 || self.ensemble.enkf_members < 2 {
            return fail("need >= 50 placement members and >= 2 filter members");
        }
        if !(self.ensemble.inflation >= 1.0) {
            return fail("inflation must be >= 1");
        }
        if self.knn_k == 0 || self.knn_k >= self.ensemble.placement_members.min(self.ensemble.enkf_members) {
            return fail("knn_k must be positive and below every ensemble size");
        }
        if !(self.ridge >= 0.0) {
            return fail("ridge must be non-negative");
        }
        if self.bo.init_count < 2 || self.bo.acq_candidates == 0 {
            return fail("need bo init_count >= 2 and acq_candidates >= 1");
        }
        let pl = &self.placement;
        if pl.n_sensors == 0 || pl.grid_nx == 0 || pl.grid_ny == 0 || !(pl.min_sep_km >= 0.0) {
            return fail("need n_sensors, grid sizes >= 1 and min_sep_km >= 0");
        }
        Ok(())
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let d = &self.domain_km;
        let t = &self.times;
        let m = &self.meteo;
        let releases = (t.release_duration_min / t.interval_min).round().max(1.0) as usize;
        let scenario = Scenario {
            domain: DomainBox { x_min: d.x_min * KM, x_max: d.x_max * KM, y_min: d.y_min * KM, y_max: d.y_max * KM },
            pipeline_x: self.pipeline_km.x * KM,
            pipeline_y: (self.pipeline_km.y_start * KM, self.pipeline_km.y_end * KM),
            meteo: MeteoConfig {
                wind_speed: m.wind_speed_ms,
                wind_dir: m.wind_dir_mean_deg.to_radians(),
                p_y: m.p_y,
                q_y: m.q_y,
                dt: t.interval_min * MIN,
            },
            wind_dir_std: m.wind_dir_std_deg.to_radians(),
            schedule: regular_schedule(releases, t.interval_min * MIN, t.puff_mass),
            obs: ObservationModel { noise_mean: self.noise.mean, noise_std: self.noise.std, conc_floor: self.noise.floor },
            placement_times: t.instants(t.placement_steps),
            assimilation_times: t.instants(t.assimilation_steps),
            knn: KnnConfig::with_k(self.knn_k),
            ridge: Ridge::Relative(self.ridge),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { nx: self.placement.grid_nx, ny: self.placement.grid_ny }
    }

    pub fn min_sep_m(&self) -> f64 {
        self.placement.min_sep_km * KM
    }

    /// Convenience for `--seed`.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seeds = Seeds::from_base(s);
        }
        self
    }
}
