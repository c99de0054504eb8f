//! Posterior predictive checks and process-noise checks.

use rayon::prelude::*;
use serde::Serialize;

use super::residuals::{require_aligned, smoothed_observation_means};
use super::tests::{ks_test, mean_zero_test, KsResult, MeanTest, Reference};
use crate::bayes::PosteriorSamples;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::Backend;
use crate::kalman::{ffbs_with, kalman_filter};
use crate::model::StateSpaceModel;
use crate::params::ParamVector;
use crate::rng::{derive_rng, derive_seed};
use crate::smc::{bootstrap_filter, ParticleOptions};
use crate::stats::{mean, sample_sd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Sd,
    /// `Σ (y_t − ŷ_{t|1:T})²` with fitted values from the smoother at each replicate's θ.
    SumSquaredResiduals,
}

impl Statistic {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Statistic::Mean),
            "sd" => Ok(Statistic::Sd),
            "ssr" => Ok(Statistic::SumSquaredResiduals),
            _ => Err(SsmError::Config(format!("unknown statistic `{s}` (mean, sd, ssr)"))),
        }
    }

    fn depends_on_theta(&self) -> bool {
        matches!(self, Statistic::SumSquaredResiduals)
    }

    pub fn evaluate(&self, model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<f64> {
        let ys: Vec<f64> = data.records().iter().flat_map(|r| r.iter().flatten().cloned()).collect();
        match self {
            Statistic::Mean => Ok(mean(&ys)),
            Statistic::Sd => sample_sd(&ys).ok_or_else(|| SsmError::Data("SD statistic needs two observations".into())),
            Statistic::SumSquaredResiduals => {
                let fitted = smoothed_observation_means(model, data, theta, &Backend::Kalman)?;
                Ok((0..data.len())
                    .flat_map(|t| data.record(t).iter().zip(&fitted[t]).filter_map(|(y, f)| y.map(|y| (y - f).powi(2))).collect::<Vec<_>>())
                    .sum())
            }
        }
    }
}

/// Which θ draw generates each replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PpcMode {
    /// Replicate i uses draw i (cycling through the posterior).
    PerDraw,
    /// One draw, chosen by the seed, for every replicate.
    SingleDraw,
}

/// How the states behind a replicate are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateStates {
    /// A fresh state process simulated from the model.
    NewProcess,
    /// A draw from the state posterior given the observed data; only the observations are new.
    Posterior,
}

#[derive(Clone, Debug, Serialize)]
pub struct PpcResult {
    pub statistic: Statistic,
    pub mode: PpcMode,
    pub states: ReplicateStates,
    /// Observed statistic (at the first replicate's θ when the statistic depends on θ).
    pub observed: f64,
    /// Observed statistic per replicate, when it depends on θ.
    pub observed_per_replicate: Option<Vec<f64>>,
    pub replicates: Vec<f64>,
    /// Fraction of replicates with statistic ≥ observed.
    pub p_value: f64,
    pub warnings: Vec<String>,
}

impl PpcResult {
    /// Whether the observed statistic falls inside the central `level` of the replicates.
    pub fn inside_central(&self, level: f64) -> bool {
        let a = (1.0 - level) / 2.0;
        self.p_value > a && self.p_value < 1.0 - a
    }
}

/// One posterior state trajectory `z_0..z_T` at θ: FFBS for linear-Gaussian
/// models, otherwise a path from a 1000-particle bootstrap filter.
pub fn draw_state_trajectory(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, seed: u64) -> Result<Vec<Vec<f64>>> {
    if model.linear_gaussian(data, 0, theta).is_some() {
        let f = kalman_filter(model, data, theta)?;
        let mut rng = derive_rng(seed, &[0xFFB5]);
        return Ok(ffbs_with(&f, &mut rng));
    }
    let opts = ParticleOptions { particles: 1000, keep_path: true, ..ParticleOptions::default() };
    bootstrap_filter(model, data, theta, &opts, seed)?
        .path
        .ok_or_else(|| SsmError::numerical(0, "particle filter returned no path"))
}

fn simulate_observations(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, states: &[Vec<f64>], seed: u64) -> TimeSeriesData {
    let mut rng = derive_rng(seed, &[1]);
    let mut out = data.clone();
    for t in 0..data.len() {
        model.write_observations(data, t, &states[t + 1], theta, &mut rng, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn posterior_predictive_check(
    model: &dyn StateSpaceModel,
    samples: &PosteriorSamples,
    data: &TimeSeriesData,
    statistic: Statistic,
    mode: PpcMode,
    states: ReplicateStates,
    n_rep: usize,
    seed: u64,
) -> Result<PpcResult> {
    require_aligned(model, data)?;
    if n_rep == 0 || samples.n_draws() == 0 {
        return Err(SsmError::Config("need at least one replicate and one posterior draw".into()));
    }
    let total = samples.n_chains() * samples.n_draws();
    let pick = |i: usize| -> (usize, usize) {
        let k = match mode {
            PpcMode::PerDraw => i * total / n_rep,
            PpcMode::SingleDraw => (derive_seed(seed, &[0x51]) % total as u64) as usize,
        };
        (k / samples.n_draws(), k % samples.n_draws())
    };
    let per_rep: Vec<(f64, f64)> = (0..n_rep)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let (c, d) = pick(i);
            let theta = samples.theta(c, d);
            let rep_seed = derive_seed(seed, &[i as u64]);
            let rep = match states {
                ReplicateStates::NewProcess => crate::model::simulate(model, &theta, data, rep_seed)?.data,
                ReplicateStates::Posterior => {
                    let z = match &samples.states {
                        Some(s) if s[c][d].len() == data.len() + 1 => s[c][d].clone(),
                        _ => draw_state_trajectory(model, data, &theta, derive_seed(rep_seed, &[2]))?,
                    };
                    simulate_observations(model, data, &theta, &z, rep_seed)
                }
            };
            Ok((statistic.evaluate(model, data, &theta)?, statistic.evaluate(model, &rep, &theta)?))
        })
        .collect::<Result<_>>()?;
    let replicates: Vec<f64> = per_rep.iter().map(|p| p.1).collect();
    let observed_each: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
    let exceed = per_rep.iter().filter(|(o, r)| r >= o).count();
    let mut warnings = Vec::new();
    if n_rep < 20 {
        warnings.push(format!("only {n_rep} replicates; the p-value is imprecise"));
    }
    Ok(PpcResult {
        statistic,
        mode,
        states,
        observed: observed_each[0],
        observed_per_replicate: statistic.depends_on_theta().then_some(observed_each),
        replicates,
        p_value: exceed as f64 / n_rep as f64,
        warnings,
    })
}

/// Samples holding one point; turns the predictive check into its plug-in version at θ̂.
pub fn point_mass(model: &dyn StateSpaceModel, theta: &ParamVector) -> PosteriorSamples {
    let spec = model.spec();
    let free = spec.free_indices();
    PosteriorSamples {
        names: spec.free_names(),
        draws: vec![vec![free.iter().map(|&i| theta.values()[i]).collect()]],
        log_posterior: vec![vec![f64::NAN]],
        loglik: vec![vec![f64::NAN]],
        states: None,
        acceptance: vec![f64::NAN],
        warmup: 0,
        base: theta.clone(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProcessCheck {
    /// Implied noise `ε_t` per step and coordinate.
    pub noise: Vec<Vec<f64>>,
    /// Per coordinate: mean test of the raw noise, KS of the noise scaled by its assumed SD.
    pub mean_tests: Vec<MeanTest>,
    pub ks: Vec<Option<KsResult>>,
}

/// Invert the process equation along a trajectory `z_0..z_T` and test the implied noise.
pub fn process_assumption_check(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, states: &[Vec<f64>]) -> Result<ProcessCheck> {
    let n = model.num_steps(data);
    if states.len() != n + 1 {
        return Err(SsmError::Config(format!("need a trajectory z_0..z_T of {} states, got {}", n + 1, states.len())));
    }
    let mut noise = Vec::with_capacity(n);
    let mut scaled = Vec::with_capacity(n);
    for t in 0..n {
        let (e, sd) = model.process_noise(data, t, &states[t], &states[t + 1], theta).ok_or_else(|| {
            SsmError::Unsupported(format!("model `{}` has no invertible process equation", model.name()))
        })?;
        scaled.push(e.iter().zip(&sd).map(|(a, s)| if *s > 0.0 { a / s } else { f64::NAN }).collect::<Vec<_>>());
        noise.push(e);
    }
    let dim = noise.first().map_or(0, |e| e.len());
    let mut mean_tests = Vec::new();
    let mut ks = Vec::new();
    for c in 0..dim {
        let col: Vec<f64> = noise.iter().map(|e| e[c]).collect();
        mean_tests.push(mean_zero_test(&col)?);
        let sc: Vec<f64> = scaled.iter().map(|e| e[c]).collect();
        ks.push(ks_test(&sc, Reference::StdNormal).ok());
    }
    Ok(ProcessCheck { noise, mean_tests, ks })
}
