//! Augmented-state ensemble Kalman filter.
//!
//! Each member carries `[theta, ln u]`: the static parameters followed by
//! log-concentrations at the sensors. Observations are
//! `d* = H u* + mu + eps*` with `H = [0 I]`, so the update uses the
//! bias-corrected residual `d_j - H u_j - mu` and parameters move only
//! through their cross-covariance with the observed block.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dispersion::{observe_snapshots, puff_snapshots, sensor_seed, Point, PuffField, ScenarioParams};
use crate::error::{invalid, Error, Result};
use crate::mi::{knn_entropy, KnnConfig};
use crate::par;
use crate::rng;
use crate::sample::SampleMatrix;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsOperator {
    pub n_params: usize,
    pub n_obs: usize,
    /// Log-noise bias `mu`.
    pub bias: f64,
    /// Variance of the zero-mean perturbation `eps*`.
    pub noise_var: f64,
}

impl ObsOperator {
    /// Explicit `H = [0_{n_obs x n_params} I_{n_obs}]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_obs, self.n_params + self.n_obs);
        for i in 0..self.n_obs {
            h[(i, self.n_params + i)] = 1.0;
        }
        h
    }
}

/// Members as rows: `[theta_1..theta_p, ln u_1..ln u_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEnsemble {
    pub n_params: usize,
    pub states: DMatrix<f64>,
}

impl AugmentedEnsemble {
    pub fn new(n_params: usize, states: DMatrix<f64>) -> Result<Self> {
        if states.ncols() <= n_params || states.nrows() < 2 {
            return Err(invalid("ensemble needs >= 2 members and at least one observed column"));
        }
        Ok(Self { n_params, states })
    }

    pub fn members(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.states.ncols() - self.n_params
    }

    pub fn mean(&self) -> DVector<f64> {
        self.states.row_mean().transpose()
    }

    /// Ensemble covariance `mean((u - u_bar)(u - u_bar)^T)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut a = self.states.clone();
        let mean = self.states.row_mean();
        for mut row in a.row_iter_mut() {
            row -= &mean;
        }
        a.transpose() * &a / self.members() as f64
    }

    /// Scales anomalies about the mean by `factor`.
    pub fn inflate(&mut self, factor: f64) {
        if factor == 1.0 {
            return;
        }
        let mean = self.states.row_mean();
        for mut row in self.states.row_iter_mut() {
            let anomaly = &row - &mean;
            row.copy_from(&(&mean + anomaly * factor));
        }
    }

    pub fn params(&self, member: usize) -> Vec<f64> {
        (0..self.n_params).map(|j| self.states[(member, j)]).collect()
    }
}

/// Zero-mean perturbations `[member x obs]` with standard deviation `sqrt(noise_var)`.
pub fn draw_perturbations(members: usize, op: &ObsOperator, seed: u64) -> Result<DMatrix<f64>> {
    let normal = Normal::new(0.0, op.noise_var.sqrt()).map_err(|e| invalid(format!("perturbation noise: {e}")))?;
    let mut r = rng::stream(seed);
    Ok(DMatrix::from_fn(members, op.n_obs, |_, _| normal.sample(&mut r)))
}

/// Kalman update with an explicit state covariance and perturbation draws.
///
/// `R_e` is the average outer product of the perturbation rows.
pub fn kalman_update(
    ens: &AugmentedEnsemble,
    cov: &DMatrix<f64>,
    obs: &[f64],
    perturbations: &DMatrix<f64>,
    op: &ObsOperator,
) -> Result<AugmentedEnsemble> {
    let (q, p, n) = (ens.members(), op.n_params, op.n_obs);
    if ens.n_params != p || ens.n_obs() != n || obs.len() != n {
        return Err(invalid("ensemble, operator and observation sizes disagree"));
    }
    if perturbations.shape() != (q, n) {
        return Err(invalid("perturbation matrix shape mismatch"));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite observation"));
    }
    let r_e = perturbations.transpose() * perturbations / q as f64;
    let s = cov.view((p, p), (n, n)) + r_e;
    let chol = Cholesky::new(s).ok_or(Error::SingularInnovation)?;
    // K^T = S^{-1} H Sigma
    let h_sigma = cov.rows(p, n).clone_owned();
    let gain_t = chol.solve(&h_sigma);
    let mut innov = DMatrix::zeros(q, n);
    for j in 0..q {
        for i in 0..n {
            innov[(j, i)] = obs[i] + perturbations[(j, i)] - ens.states[(j, p + i)] - op.bias;
        }
    }
    let states = &ens.states + innov * gain_t;
    Ok(AugmentedEnsemble { n_params: p, states })
}

/// Stochastic EnKF analysis with perturbations drawn from `seed`.
pub fn analysis(ens: &AugmentedEnsemble, obs: &[f64], op: &ObsOperator, seed: u64) -> Result<AugmentedEnsemble> {
    let pert = draw_perturbations(ens.members(), op, seed)?;
    kalman_update(ens, &ens.covariance(), obs, &pert, op)
}

/// Filter state for the puff release: augmented ensemble plus each member's puffs.
#[derive(Debug, Clone)]
pub struct DispersionEnsemble {
    pub ens: AugmentedEnsemble,
    fields: Vec<PuffField>,
    sensors: Vec<Point>,
}

/// Columns of the parameter block.
pub const RELEASE_Y: usize = 0;
pub const WIND_DIR: usize = 1;

impl DispersionEnsemble {
    /// Members drawn from `priors`; sensor columns start at the clamp value.
    pub fn from_prior(scenario: &Scenario, priors: &[ScenarioParams], sensors: &[Point]) -> Result<Self> {
        if sensors.is_empty() {
            return Err(invalid("no sensors"));
        }
        let floor = scenario.obs.log_conc(0.0);
        let n = sensors.len();
        let states = DMatrix::from_fn(priors.len(), 2 + n, |i, j| match j {
            RELEASE_Y => priors[i].release_y,
            WIND_DIR => priors[i].wind_dir,
            _ => floor,
        });
        let fields = priors.iter().map(|p| PuffField::new(scenario.source(p), &scenario.schedule)).collect();
        Ok(Self { ens: AugmentedEnsemble::new(2, states)?, fields, sensors: sensors.to_vec() })
    }

    pub fn sensors(&self) -> &[Point] {
        &self.sensors
    }

    /// Advances each member to `t` with its own wind and recomputes the
    /// log-concentration block. The parameter block is left unchanged.
    ///
    /// Each member's puffs are first shifted to its current release
    /// position; a wind update only affects transport from here on.
    pub fn forecast(&mut self, scenario: &Scenario, t: f64) -> Result<()> {
        let states = &self.ens.states;
        let rows = par::try_map(self.fields.len(), |m| {
            let mut field = self.fields[m].clone();
            let dy = states[(m, RELEASE_Y)] - field.source()[1];
            field.translate(0.0, dy);
            let meteo = scenario.meteo.with_wind_dir(states[(m, WIND_DIR)]);
            field.advance_to(t, &meteo, &scenario.schedule)?;
            let logs: Vec<f64> =
                self.sensors.iter().map(|&s| scenario.obs.log_conc(field.concentration(s))).collect();
            Ok((field, logs))
        })?;
        for (m, (field, logs)) in rows.into_iter().enumerate() {
            self.fields[m] = field;
            for (i, v) in logs.into_iter().enumerate() {
                self.ens.states[(m, 2 + i)] = v;
            }
        }
        Ok(())
    }

    pub fn thetas(&self) -> Vec<[f64; 2]> {
        (0..self.ens.members())
            .map(|m| [self.ens.states[(m, RELEASE_Y)], self.ens.states[(m, WIND_DIR)]])
            .collect()
    }
}

pub fn operator_for(scenario: &Scenario, n_sensors: usize) -> ObsOperator {
    ObsOperator {
        n_params: 2,
        n_obs: n_sensors,
        bias: scenario.obs.noise_mean,
        noise_var: scenario.obs.noise_std * scenario.obs.noise_std,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub members: usize,
    pub inflation: f64,
    pub seed: u64,
}

/// Parameter ensembles before the first and after every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrace {
    /// `times[0]` is 0 (prior); the rest are analysis instants (s).
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEntropy {
    pub release_y: f64,
    pub wind_dir: f64,
    pub joint: f64,
}

impl PosteriorTrace {
    /// kNN entropies per recorded step.
    ///
    /// The joint estimate is taken in coordinates scaled by the prior
    /// ensemble's standard deviations and shifted back by the log-Jacobian,
    /// since the max-norm neighbor boxes are badly biased when the two
    /// columns differ in scale by orders of magnitude.
    pub fn entropies(&self, knn: &KnnConfig) -> Result<Vec<StepEntropy>> {
        let prior = self.thetas.first().ok_or_else(|| invalid("empty posterior trace"))?;
        let scale = [0, 1].map(|c| {
            let s = mean_std(prior.iter().map(|t| t[c])).1;
            if s > 0.0 { s } else { 1.0 }
        });
        let log_jac = scale[0].ln() + scale[1].ln();
        self.thetas
            .iter()
            .map(|th| {
                let y: Vec<f64> = th.iter().map(|t| t[0]).collect();
                let w: Vec<f64> = th.iter().map(|t| t[1]).collect();
                let scaled = th.iter().flat_map(|t| [t[0] / scale[0], t[1] / scale[1]]).collect();
                let joint = SampleMatrix::new(th.len(), 2, scaled)?;
                Ok(StepEntropy {
                    release_y: knn_entropy(&SampleMatrix::from_column(&y)?, knn)?,
                    wind_dir: knn_entropy(&SampleMatrix::from_column(&w)?, knn)?,
                    joint: knn_entropy(&joint, knn)? + log_jac,
                })
            })
            .collect()
    }

    /// CSV `t, member_id, release_y, wind_dir` (t in seconds).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "member_id", "release_y", "wind_dir"])?;
        for (t, th) in self.times.iter().zip(&self.thetas) {
            for (m, v) in th.iter().enumerate() {
                out.write_record(&[t.to_string(), m.to_string(), v[0].to_string(), v[1].to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// CSV `t, parameter, mean, std, entropy` with parameters `release_y`,
    /// `wind_dir` and `joint` (mean/std empty for the joint row).
    pub fn write_summary_csv<W: Write>(&self, w: W, knn: &KnnConfig) -> Result<()> {
        let ents = self.entropies(knn)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "parameter", "mean", "std", "entropy"])?;
        for ((t, th), e) in self.times.iter().zip(&self.thetas).zip(ents) {
            for (col, name, h) in [(0, "release_y", e.release_y), (1, "wind_dir", e.wind_dir)] {
                let (m, s) = mean_std(th.iter().map(|v| v[col]));
                out.write_record(&[t.to_string(), name.into(), m.to_string(), s.to_string(), h.to_string()])?;
            }
            out.write_record(&[t.to_string(), "joint".into(), String::new(), String::new(), e.joint.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

/// Truth log-observations `[time][sensor]` at the assimilation instants.
pub fn truth_observations(scenario: &Scenario, sensors: &[Point], truth: &ScenarioParams, seed: u64) -> Result<Vec<Vec<f64>>> {
    let snaps = puff_snapshots(scenario.pipeline_x, truth, &scenario.meteo, &scenario.assimilation_times, &scenario.schedule)?;
    let rows: Vec<Vec<f64>> = sensors
        .iter()
        .enumerate()
        .map(|(i, &s)| observe_snapshots(&snaps, s, &scenario.obs, sensor_seed(seed, i)))
        .collect::<Result<_>>()?;
    Ok((0..scenario.assimilation_times.len()).map(|t| rows.iter().map(|r| r[t]).collect()).collect())
}

/// Simulates the truth once, then alternates forecast and analysis over every
/// assimilation instant.
pub fn assimilate_run(
    scenario: &Scenario,
    sensors: &[Point],
    truth: &ScenarioParams,
    opts: &RunOptions,
) -> Result<PosteriorTrace> {
    scenario.validate()?;
    let obs = truth_observations(scenario, sensors, truth, rng::derive_seed(opts.seed, &[0]))?;
    let priors = scenario.sample_prior(opts.members, rng::derive_seed(opts.seed, &[1]))?;
    let mut filter = DispersionEnsemble::from_prior(scenario, &priors, sensors)?;
    let op = operator_for(scenario, sensors.len());
    let mut trace = PosteriorTrace { times: vec![0.0], thetas: vec![filter.thetas()] };
    for (step, (&t, d)) in scenario.assimilation_times.iter().zip(&obs).enumerate() {
        filter.forecast(scenario, t)?;
        filter.ens.inflate(opts.inflation);
        filter.ens = analysis(&filter.ens, d, &op, rng::derive_seed(opts.seed, &[2, step as u64]))?;
        trace.times.push(t);
        trace.thetas.push(filter.thetas());
    }
    Ok(trace)
}
