//! Experiment orchestration: placement, assimilation and entropy scoring.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bo::BoConfig;
use crate::config::ExperimentConfig;
use crate::dispersion::{Point, ScenarioParams};
use crate::enkf::{assimilate_run, RunOptions};
use crate::error::{invalid, Result};
use crate::par;
use crate::placement::{build_ensemble, greedy_place, grid_place, PlacementResult};
use crate::rng;

const WEIGHT_TOL: f64 = 1e-9;

/// `sum_i w_i * H_i`.
pub fn conditional_entropy(entropies: &[f64], weights: &[f64]) -> Result<f64> {
    if entropies.len() != weights.len() || entropies.is_empty() {
        return Err(invalid(format!(
            "{} entropies but {} weights",
            entropies.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(invalid(format!("weights sum to {total}, not 1")));
    }
    Ok(entropies.iter().zip(weights).map(|(h, w)| h * w).sum())
}

/// Written by `place`; read back by `compare` and `assimilate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub method: String,
    pub locations_m: Vec<Point>,
    pub bound_values: Vec<f64>,
    pub seed: u64,
    pub config_digest: String,
}

impl PlacementFile {
    pub fn new(method: &str, result: &PlacementResult, seed: u64, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            locations_m: result.locations.clone(),
            bound_values: result.bound_values.clone(),
            seed,
            config_digest: cfg.digest()?,
        })
    }
}

pub fn bo_config(cfg: &ExperimentConfig) -> Result<BoConfig> {
    let s = cfg.to_scenario()?;
    Ok(BoConfig {
        lower: s.domain.lower(),
        upper: s.domain.upper(),
        init_count: cfg.bo.init_count,
        iter_count: cfg.bo.iter_count,
        acq_candidates: cfg.bo.acq_candidates,
        seed: cfg.seeds.bo,
    })
}

/// Greedy BO placement on a freshly built prior ensemble.
pub fn run_placement(cfg: &ExperimentConfig) -> Result<PlacementResult> {
    let scenario = cfg.to_scenario()?;
    let ens = build_ensemble(&scenario, cfg.ensemble.placement_members, cfg.seeds.ensemble)?;
    greedy_place(&ens, cfg.placement.n_sensors, &bo_config(cfg)?, cfg.min_sep_m())
}

/// Greedy grid placement on a freshly built prior ensemble.
pub fn run_grid_placement(cfg: &ExperimentConfig, n_sensors: usize) -> Result<PlacementResult> {
    let scenario = cfg.to_scenario()?;
    let ens = build_ensemble(&scenario, cfg.ensemble.placement_members, cfg.seeds.ensemble)?;
    grid_place(&ens, n_sensors, &cfg.grid())
}

/// `count` placements of `n_sensors` points drawn uniformly in the domain.
pub fn random_placements(cfg: &ExperimentConfig, count: usize, n_sensors: usize, seed: u64) -> Result<Vec<Vec<Point>>> {
    let domain = cfg.to_scenario()?.domain;
    let mut r = rng::stream(seed);
    Ok((0..count).map(|_| (0..n_sensors).map(|_| domain.random_point(&mut r)).collect()).collect())
}

/// Entropy traces of one assimilation run; index 0 is the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTrace {
    pub condition: usize,
    pub truth: ScenarioParams,
    pub times_s: Vec<f64>,
    pub release_y_entropy: Vec<f64>,
    pub wind_dir_entropy: Vec<f64>,
    pub joint_entropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementEvaluation {
    pub name: String,
    pub locations_m: Vec<Point>,
    pub conditions: Vec<ConditionTrace>,
    /// Weighted over conditions, per time step.
    pub conditional_release_y: Vec<f64>,
    pub conditional_joint: Vec<f64>,
}

impl PlacementEvaluation {
    pub fn final_release_y(&self) -> f64 {
        *self.conditional_release_y.last().expect("non-empty trace")
    }

    pub fn final_joint(&self) -> f64 {
        *self.conditional_joint.last().expect("non-empty trace")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub config_digest: String,
    pub weights: Vec<f64>,
    pub placements: Vec<PlacementEvaluation>,
    /// Placement names, best (lowest final release-location entropy) first.
    pub ranking: Vec<String>,
}

impl EvaluationReport {
    pub fn get(&self, name: &str) -> Option<&PlacementEvaluation> {
        self.placements.iter().find(|p| p.name == name)
    }

    /// CSV `placement, condition, t, release_y_entropy, wind_dir_entropy, joint_entropy`.
    pub fn write_traces_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["placement", "condition", "t", "release_y_entropy", "wind_dir_entropy", "joint_entropy"])?;
        for p in &self.placements {
            for c in &p.conditions {
                for k in 0..c.times_s.len() {
                    out.write_record(&[
                        p.name.clone(),
                        c.condition.to_string(),
                        c.times_s[k].to_string(),
                        c.release_y_entropy[k].to_string(),
                        c.wind_dir_entropy[k].to_string(),
                        c.joint_entropy[k].to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// CSV `placement, t, release_y, joint` of conditional entropies.
    pub fn write_conditional_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["placement", "t", "release_y", "joint"])?;
        for p in &self.placements {
            for (k, t) in p.conditions[0].times_s.iter().enumerate() {
                out.write_record(&[
                    p.name.clone(),
                    t.to_string(),
                    p.conditional_release_y[k].to_string(),
                    p.conditional_joint[k].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Initial conditions sampled from the prior.
pub fn sample_conditions(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Vec<ScenarioParams>> {
    cfg.to_scenario()?.sample_prior(n, rng::derive_seed(seed, &[0]))
}

/// Assimilates every (placement, condition) pair and scores placements.
///
/// Run seeds depend only on the condition, so two placements see the same
/// truth, observation noise and prior ensemble.
pub fn compare_placements(
    cfg: &ExperimentConfig,
    placements: &[(String, Vec<Point>)],
    n_conditions: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    if placements.len() < 2 {
        return Err(invalid("need at least two placements to compare"));
    }
    if n_conditions == 0 {
        return Err(invalid("need at least one initial condition"));
    }
    let scenario = cfg.to_scenario()?;
    let truths = sample_conditions(cfg, n_conditions, seed)?;
    let jobs = placements.len() * n_conditions;
    let traces = par::try_map(jobs, |job| {
        let (p, c) = (job / n_conditions, job % n_conditions);
        let opts = RunOptions {
            members: cfg.ensemble.enkf_members,
            inflation: cfg.ensemble.inflation,
            seed: rng::derive_seed(seed, &[1, c as u64]),
        };
        let trace = assimilate_run(&scenario, &placements[p].1, &truths[c], &opts)?;
        let ents = trace.entropies(&scenario.knn)?;
        Ok(ConditionTrace {
            condition: c,
            truth: truths[c],
            times_s: trace.times,
            release_y_entropy: ents.iter().map(|e| e.release_y).collect(),
            wind_dir_entropy: ents.iter().map(|e| e.wind_dir).collect(),
            joint_entropy: ents.iter().map(|e| e.joint).collect(),
        })
    })?;
    let weights = vec![1.0 / n_conditions as f64; n_conditions];
    let mut evals = Vec::with_capacity(placements.len());
    let mut traces = traces.into_iter();
    for (name, locs) in placements {
        let conditions: Vec<ConditionTrace> = traces.by_ref().take(n_conditions).collect();
        let steps = conditions[0].times_s.len();
        let agg = |f: &dyn Fn(&ConditionTrace) -> f64| -> Result<f64> {
            let hs: Vec<f64> = conditions.iter().map(f).collect();
            conditional_entropy(&hs, &weights)
        };
        let conditional_release_y = (0..steps).map(|k| agg(&|c| c.release_y_entropy[k])).collect::<Result<_>>()?;
        let conditional_joint = (0..steps).map(|k| agg(&|c| c.joint_entropy[k])).collect::<Result<_>>()?;
        evals.push(PlacementEvaluation {
            name: name.clone(),
            locations_m: locs.clone(),
            conditions,
            conditional_release_y,
            conditional_joint,
        });
    }
    let mut order: Vec<usize> = (0..evals.len()).collect();
    order.sort_by(|&a, &b| evals[a].final_release_y().total_cmp(&evals[b].final_release_y()).then(a.cmp(&b)));
    Ok(EvaluationReport {
        seed,
        config_digest: cfg.digest()?,
        weights,
        ranking: order.into_iter().map(|i| evals[i].name.clone()).collect(),
        placements: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_entropy_arithmetic() {
        assert_eq!(conditional_entropy(&[1.0, 3.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert_eq!(conditional_entropy(&[2.5], &[1.0]).unwrap(), 2.5);
        assert_eq!(conditional_entropy(&[4.0, 0.0], &[0.25, 0.75]).unwrap(), 1.0);
    }

    #[test]
    fn conditional_entropy_rejects_bad_weights() {
        assert!(conditional_entropy(&[1.0, 2.0], &[1.0]).is_err());
        assert!(conditional_entropy(&[1.0, 2.0], &[0.7, 0.7]).is_err());
        assert!(conditional_entropy(&[1.0, 2.0], &[1.5, -0.5]).is_err());
    }
}
