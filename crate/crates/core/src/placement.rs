//! Greedy sensor placement on the projected mutual-information bound.
//!
//! Step `i` maximizes the bound between the QoI block and the stacked
//! trajectories of the `i - 1` sensors already placed plus one candidate.
//! The candidate search is either Bayesian optimization over the continuous
//! domain or exhaustive evaluation on a grid.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bo::{self, BoConfig, BoTrace};
use crate::cca::mi_lower_bound;
use crate::dispersion::{observe_snapshots, puff_snapshots, sensor_seed, Point, PuffField};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng;
use crate::sample::SampleMatrix;
use crate::scenario::{GridSpec, Scenario};

type LocKey = (u64, u64);

fn key(p: Point) -> LocKey {
    (p[0].to_bits(), p[1].to_bits())
}

/// Prior draws of the QoI plus lazily simulated sensor trajectories.
///
/// Noise is drawn once per (member, location, time) from a seed that
/// depends only on the ensemble seed, the member and the location, so every
/// candidate comparison sees the same random world.
pub struct PriorEnsemble {
    scenario: Scenario,
    params: SampleMatrix,
    snapshots: Vec<Vec<PuffField>>,
    seed: u64,
    cache: Mutex<BTreeMap<LocKey, Arc<Vec<f64>>>>,
}

pub fn build_ensemble(scenario: &Scenario, n_members: usize, seed: u64) -> Result<PriorEnsemble> {
    scenario.validate()?;
    if n_members < 50 {
        return Err(invalid(format!("placement ensemble needs >= 50 members, got {n_members}")));
    }
    let draws = scenario.sample_prior(n_members, rng::derive_seed(seed, &[0]))?;
    let params = SampleMatrix::new(
        n_members,
        2,
        draws.iter().flat_map(|p| [p.release_y, p.wind_dir]).collect(),
    )?;
    let snapshots = par::try_map(n_members, |m| {
        puff_snapshots(
            scenario.pipeline_x,
            &draws[m],
            &scenario.meteo,
            &scenario.placement_times,
            &scenario.schedule,
        )
    })?;
    Ok(PriorEnsemble { scenario: scenario.clone(), params, snapshots, seed, cache: Mutex::new(BTreeMap::new()) })
}

impl PriorEnsemble {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn params(&self) -> &SampleMatrix {
        &self.params
    }

    pub fn members(&self) -> usize {
        self.params.rows()
    }

    pub fn times(&self) -> usize {
        self.scenario.placement_times.len()
    }

    /// Seed passed to the single-sensor simulation of `member` at `loc`.
    pub fn member_seed(&self, member: usize, loc: Point) -> u64 {
        let (a, b) = key(loc);
        rng::derive_seed(self.seed, &[1, member as u64, a, b])
    }

    /// Row-major `[member x time]` log-observations at `loc`.
    pub fn observations(&self, loc: Point) -> Result<Arc<Vec<f64>>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key(loc)) {
            return Ok(Arc::clone(hit));
        }
        let rows = par::try_map(self.members(), |m| {
            observe_snapshots(&self.snapshots[m], loc, &self.scenario.obs, sensor_seed(self.member_seed(m, loc), 0))
        })?;
        let flat = Arc::new(rows.concat());
        let mut cache = self.cache.lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(key(loc)).or_insert(flat)))
    }

    pub fn cached_locations(&self) -> Vec<Point> {
        self.cache
            .lock()
            .expect("cache lock")
            .keys()
            .map(|&(a, b)| [f64::from_bits(a), f64::from_bits(b)])
            .collect()
    }

    /// Stacked trajectories `[member x (sensor, time)]`.
    pub fn d_block(&self, sensors: &[Point]) -> Result<SampleMatrix> {
        let obs: Vec<Arc<Vec<f64>>> = sensors.iter().map(|&s| self.observations(s)).collect::<Result<_>>()?;
        let t = self.times();
        let mut data = Vec::with_capacity(self.members() * t * sensors.len());
        for m in 0..self.members() {
            for o in &obs {
                data.extend_from_slice(&o[m * t..(m + 1) * t]);
            }
        }
        SampleMatrix::new(self.members(), t * sensors.len(), data)
    }
}

/// Bound on `I(q; d_fixed, d_candidate)`.
pub fn objective(ens: &PriorEnsemble, fixed: &[Point], candidate: Point) -> Result<f64> {
    if !ens.scenario.domain.contains(candidate) {
        return Err(invalid(format!("candidate {candidate:?} outside the domain")));
    }
    let mut sensors = fixed.to_vec();
    sensors.push(candidate);
    let d = ens.d_block(&sensors)?;
    mi_lower_bound(&ens.params, &d, &ens.scenario.knn, ens.scenario.ridge)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub x: f64,
    pub y: f64,
    /// 1-based greedy step.
    pub step: usize,
    pub mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepTrace {
    Bo(BoTrace),
    Grid(Vec<SurfacePoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub locations: Vec<Point>,
    pub bound_values: Vec<f64>,
    pub traces: Vec<StepTrace>,
}

impl PlacementResult {
    pub fn surfaces(&self) -> Vec<SurfacePoint> {
        self.traces
            .iter()
            .filter_map(|t| match t {
                StepTrace::Grid(s) => Some(s.clone()),
                StepTrace::Bo(_) => None,
            })
            .flatten()
            .collect()
    }
}

/// CSV with columns `x_m, y_m, step, mi_nats`.
pub fn write_surface_csv<W: Write>(w: W, surface: &[SurfacePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x_m", "y_m", "step", "mi_nats"])?;
    for p in surface {
        out.write_record(&[p.x.to_string(), p.y.to_string(), p.step.to_string(), p.mi.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Objective at every grid node given `fixed`, nodes in lexicographic order.
pub fn grid_surface(ens: &PriorEnsemble, fixed: &[Point], grid: &GridSpec) -> Result<Vec<(Point, f64)>> {
    let nodes = grid.nodes(&ens.scenario.domain);
    let vals = par::try_map(nodes.len(), |i| objective(ens, fixed, nodes[i]))?;
    Ok(nodes.into_iter().zip(vals).collect())
}

fn far_enough(p: &[f64], selected: &[Point], min_sep: f64) -> bool {
    selected.iter().all(|s| (p[0] - s[0]).hypot(p[1] - s[1]) >= min_sep)
}

/// Greedy placement with one BO run per sensor.
///
/// An incumbent closer than `min_sep` to a selected sensor is replaced by the
/// best trace point that keeps the separation.
pub fn greedy_place(ens: &PriorEnsemble, n_sensors: usize, bo_cfg: &BoConfig, min_sep: f64) -> Result<PlacementResult> {
    if n_sensors < 1 {
        return Err(invalid("need at least one sensor"));
    }
    let mut result = PlacementResult { locations: Vec::new(), bound_values: Vec::new(), traces: Vec::new() };
    for i in 0..n_sensors {
        let cfg = BoConfig { seed: rng::derive_seed(bo_cfg.seed, &[i as u64]), ..bo_cfg.clone() };
        let fixed = result.locations.clone();
        let trace = bo::maximize(|x| objective(ens, &fixed, [x[0], x[1]]), &cfg)?;
        let mut best: Option<usize> = None;
        for (j, p) in trace.points.iter().enumerate() {
            if far_enough(p, &fixed, min_sep) && best.is_none_or(|b| trace.values[j] > trace.values[b]) {
                best = Some(j);
            }
        }
        let j = best.ok_or(Error::Separation { min_sep })?;
        result.locations.push([trace.points[j][0], trace.points[j][1]]);
        result.bound_values.push(trace.values[j]);
        result.traces.push(StepTrace::Bo(trace));
    }
    Ok(result)
}

/// Greedy placement by exhaustive grid search; ties go to the
/// lexicographically smallest node.
pub fn grid_place(ens: &PriorEnsemble, n_sensors: usize, grid: &GridSpec) -> Result<PlacementResult> {
    if n_sensors < 1 {
        return Err(invalid("need at least one sensor"));
    }
    let mut result = PlacementResult { locations: Vec::new(), bound_values: Vec::new(), traces: Vec::new() };
    for step in 1..=n_sensors {
        let surface = grid_surface(ens, &result.locations, grid)?;
        let mut best: Option<usize> = None;
        for (j, (p, v)) in surface.iter().enumerate() {
            let taken = result.locations.iter().any(|s| s == p);
            if !taken && best.is_none_or(|b| *v > surface[b].1) {
                best = Some(j);
            }
        }
        let j = best.ok_or_else(|| invalid("grid has no free node left"))?;
        result.locations.push(surface[j].0);
        result.bound_values.push(surface[j].1);
        result.traces.push(StepTrace::Grid(
            surface.iter().map(|(p, v)| SurfacePoint { x: p[0], y: p[1], step, mi: *v }).collect(),
        ));
    }
    Ok(result)
}
