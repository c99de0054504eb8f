//! Sequential Monte Carlo: importance sampling without resampling, the
//! bootstrap particle filter and IF2-style iterated filtering.
//!
//! Particles are processed in fixed blocks, each with its own stream derived
//! from `(seed, step, block)`, so results do not depend on the thread count.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{draw_initial, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::derive_rng;
use crate::stats::log_sum_exp;

const BLOCK: usize = 256;
const TAG_INIT: u64 = 0x1417;
const TAG_PROPAGATE: u64 = 0x9A9A;
const TAG_RESAMPLE: u64 = 0x4E54;
const TAG_PATH: u64 = 0x9A74;
const TAG_PERTURB: u64 = 0x9E47;
const TAG_FINAL: u64 = 0xF1A1;

/// Weighted particle set.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub particles: Vec<Vec<f64>>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    pub fn mean(&self) -> Vec<f64> {
        weighted_moments(&self.particles, &self.weights).0
    }
}

fn ess(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}

fn weighted_moments(particles: &[Vec<f64>], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = particles.first().map_or(0, |p| p.len());
    let mut mean = vec![0.0; d];
    for (p, &wi) in particles.iter().zip(w) {
        for k in 0..d {
            mean[k] += wi * p[k];
        }
    }
    let mut var = vec![0.0; d];
    for (p, &wi) in particles.iter().zip(w) {
        for k in 0..d {
            var[k] += wi * (p[k] - mean[k]).powi(2);
        }
    }
    (mean, var)
}

/// Normalized weights from log-weights.
fn normalize(logw: &[f64]) -> Vec<f64> {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn systematic_with(weights: &[f64], n: usize, u: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| *w < 0.0) {
        return Err(SsmError::numerical(0, "systematic resampling needs nonnegative weights with positive total"));
    }
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut j = 0;
    for i in 0..n {
        let pos = (u + i as f64) / n as f64;
        while pos >= cum && j + 1 < weights.len() {
            j += 1;
            cum += weights[j] / total;
        }
        out.push(j);
    }
    Ok(out)
}

/// Systematic resampling: one uniform offset shared by `n` evenly spaced strata.
pub fn systematic_resample(weights: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    let u: f64 = derive_rng(seed, &[TAG_RESAMPLE]).random();
    systematic_with(weights, n, u)
}

#[derive(Clone, Debug)]
pub struct ParticleOptions {
    pub particles: usize,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    /// Keep the ancestry so that one trajectory can be drawn at the end.
    pub keep_path: bool,
    /// Record the one-step predictive moments and PIT values.
    pub predictive: bool,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self { particles: 1000, ess_threshold: 0.5, keep_path: false, predictive: false }
    }
}

impl ParticleOptions {
    pub fn new(particles: usize) -> Self {
        Self { particles, ..Self::default() }
    }
}

/// One-step predictive summary per observation coordinate (`None` where missing).
#[derive(Clone, Debug, Default)]
pub struct PredictiveSummary {
    pub mean: Vec<Option<f64>>,
    pub var: Vec<Option<f64>>,
    pub pit: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct ParticleFilterResult {
    pub loglik: f64,
    pub loglik_terms: Vec<f64>,
    /// Filtered means and variances of `z_1..z_T`.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
    pub ensemble: ParticleEnsemble,
    pub predictive: Option<Vec<PredictiveSummary>>,
    /// One trajectory `z_0..z_T` drawn from the final weighted ancestry.
    pub path: Option<Vec<Vec<f64>>>,
}

fn propagate(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    t: usize,
    particles: &[Vec<f64>],
    thetas: ThetaSource<'_>,
    path: &[u64],
) -> Vec<Vec<f64>> {
    let n = particles.len();
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut key = path.to_vec();
            key.extend_from_slice(&[TAG_PROPAGATE, t as u64, b as u64]);
            let mut rng = derive_rng(key[0], &key[1..]);
            (b * BLOCK..((b + 1) * BLOCK).min(n))
                .map(|i| model.sample_process(data, t, &particles[i], thetas.get(i), &mut rng))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Clone, Copy)]
enum ThetaSource<'a> {
    Shared(&'a ParamVector),
    PerParticle(&'a [ParamVector]),
}

impl<'a> ThetaSource<'a> {
    fn get(&self, i: usize) -> &'a ParamVector {
        match self {
            ThetaSource::Shared(t) => t,
            ThetaSource::PerParticle(v) => &v[i],
        }
    }
}

fn initial_particles(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    thetas: ThetaSource<'_>,
    n: usize,
    path: &[u64],
) -> Vec<Vec<f64>> {
    let enumeration = model.discrete_states();
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut key = path.to_vec();
            key.extend_from_slice(&[TAG_INIT, b as u64]);
            let mut rng = derive_rng(key[0], &key[1..]);
            let shared = match thetas {
                ThetaSource::Shared(th) => Some(model.initial_state(data, th)),
                ThetaSource::PerParticle(_) => None,
            };
            let enumeration = enumeration.clone();
            (b * BLOCK..((b + 1) * BLOCK).min(n))
                .map(|i| {
                    let own;
                    let init = match &shared {
                        Some(s) => s,
                        None => {
                            own = model.initial_state(data, thetas.get(i));
                            &own
                        }
                    };
                    draw_initial(init, enumeration.as_deref(), &mut rng)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn predictive_summary(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    t: usize,
    theta: &ParamVector,
    particles: &[Vec<f64>],
    w: &[f64],
) -> PredictiveSummary {
    let rec = data.record(t);
    let mut out = PredictiveSummary {
        mean: vec![None; rec.len()],
        var: vec![None; rec.len()],
        pit: vec![None; rec.len()],
    };
    for (c, y) in rec.iter().enumerate() {
        let Some(y) = *y else { continue };
        let mut m = 0.0;
        let mut s2 = 0.0;
        let mut have_moments = true;
        let mut u = 0.0;
        let mut have_cdf = true;
        for (z, &wi) in particles.iter().zip(w) {
            match model.observation_moments(data, t, z, theta) {
                Some((mu, var)) if have_moments => {
                    m += wi * mu[c];
                    s2 += wi * (var[c] + mu[c] * mu[c]);
                }
                _ => have_moments = false,
            }
            match model.observation_cdf(data, t, z, c, y, theta) {
                Some(p) if have_cdf => u += wi * p,
                _ => have_cdf = false,
            }
        }
        if have_moments {
            out.mean[c] = Some(m);
            out.var[c] = Some((s2 - m * m).max(0.0));
        }
        if have_cdf {
            out.pit[c] = Some(u.clamp(0.0, 1.0));
        }
    }
    out
}

fn run_filter(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    theta: &ParamVector,
    opts: &ParticleOptions,
    seed: u64,
    resample: bool,
) -> Result<ParticleFilterResult> {
    model.check(data, theta)?;
    let n = opts.particles;
    if n == 0 {
        return Err(SsmError::Config("particle count must be positive".into()));
    }
    if !(opts.ess_threshold > 0.0 && opts.ess_threshold <= 1.0) && resample {
        return Err(SsmError::Config("ESS threshold must lie in (0, 1]".into()));
    }
    let steps = model.num_steps(data);
    let src = ThetaSource::Shared(theta);
    let mut particles = initial_particles(model, data, src, n, &[seed]);
    let mut logw = vec![-(n as f64).ln(); n];
    let mut history: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut parents: Vec<Vec<usize>> = Vec::new();
    if opts.keep_path {
        history.push(particles.clone());
    }
    let mut out = ParticleFilterResult {
        loglik: 0.0,
        loglik_terms: Vec::with_capacity(steps),
        means: Vec::with_capacity(steps),
        variances: Vec::with_capacity(steps),
        ess: Vec::with_capacity(steps),
        resampled: Vec::with_capacity(steps),
        ensemble: ParticleEnsemble { particles: Vec::new(), weights: Vec::new() },
        predictive: opts.predictive.then(Vec::new),
        path: None,
    };
    for t in 0..steps {
        let w = normalize(&logw);
        let mut did = false;
        let mut idx: Vec<usize> = (0..n).collect();
        if resample && ess(&w) < opts.ess_threshold * n as f64 {
            let u: f64 = derive_rng(seed, &[TAG_RESAMPLE, t as u64]).random();
            idx = systematic_with(&w, n, u)?;
            particles = idx.iter().map(|&i| particles[i].clone()).collect();
            logw.iter_mut().for_each(|l| *l = -(n as f64).ln());
            did = true;
        }
        particles = propagate(model, data, t, &particles, src, &[seed]);
        if let Some(pred) = out.predictive.as_mut() {
            pred.push(predictive_summary(model, data, t, theta, &particles, &normalize(&logw)));
        }
        let mut term = 0.0;
        if model.observed_at(data, t) {
            let logg: Vec<f64> = particles.par_iter().map(|z| model.observation_log_density(data, t, z, theta)).collect();
            let joint: Vec<f64> = logw.iter().zip(&logg).map(|(a, b)| a + b).collect();
            let inc = log_sum_exp(&joint);
            if !inc.is_finite() {
                return Err(SsmError::Depletion { step: t });
            }
            logw = joint.iter().map(|l| l - inc).collect();
            term = inc;
        }
        out.loglik += term;
        out.loglik_terms.push(term);
        let w = normalize(&logw);
        let (m, v) = weighted_moments(&particles, &w);
        out.means.push(m);
        out.variances.push(v);
        out.ess.push(ess(&w));
        out.resampled.push(did);
        if opts.keep_path {
            history.push(particles.clone());
            parents.push(idx);
        }
    }
    let w = normalize(&logw);
    if opts.keep_path {
        let u: f64 = derive_rng(seed, &[TAG_PATH]).random();
        let mut k = systematic_with(&w, 1, u)?[0];
        let mut path = vec![Vec::new(); steps + 1];
        for t in (0..=steps).rev() {
            path[t] = history[t][k].clone();
            if t > 0 {
                k = parents[t - 1][k];
            }
        }
        out.path = Some(path);
    }
    out.ensemble = ParticleEnsemble { particles, weights: w };
    Ok(out)
}

/// Sequential importance sampling with the process as proposal and no resampling.
pub fn sis_filter(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    theta: &ParamVector,
    particles: usize,
    seed: u64,
) -> Result<ParticleFilterResult> {
    run_filter(model, data, theta, &ParticleOptions::new(particles), seed, false)
}

/// Bootstrap filter: propagate with the process, weight with the observation
/// density, resample systematically when ESS drops below the threshold.
pub fn bootstrap_filter(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    theta: &ParamVector,
    opts: &ParticleOptions,
    seed: u64,
) -> Result<ParticleFilterResult> {
    run_filter(model, data, theta, opts, seed, true)
}

/// Perturbation scales on the transformed scale and their per-pass decay.
#[derive(Clone, Debug)]
pub struct CoolingSchedule {
    pub sds: Vec<f64>,
    pub factor: f64,
}

impl CoolingSchedule {
    pub fn new(sds: Vec<f64>, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(SsmError::Config("cooling factor must lie in (0, 1)".into()));
        }
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SsmError::Config("perturbation SDs must be finite and nonnegative".into()));
        }
        Ok(Self { sds, factor })
    }

    pub fn uniform(n: usize, sd: f64, factor: f64) -> Result<Self> {
        Self::new(vec![sd; n], factor)
    }

    pub fn sd_at(&self, pass: usize) -> Vec<f64> {
        let c = self.factor.powi(pass as i32);
        self.sds.iter().map(|s| s * c).collect()
    }
}

#[derive(Clone, Debug)]
pub struct IteratedFilteringOptions {
    pub passes: usize,
    pub particles: usize,
    pub schedule: CoolingSchedule,
}

#[derive(Clone, Debug)]
pub struct IteratedFilteringResult {
    /// Swarm means after each pass, starting with `θ_0`.
    pub trace: Vec<ParamVector>,
    /// Log-likelihood of the perturbed swarm filter in each pass.
    pub pass_logliks: Vec<f64>,
    pub theta: ParamVector,
    /// Plain bootstrap estimate at the final point.
    pub loglik: f64,
}

fn swarm_mean(xs: &[Vec<f64>]) -> Vec<f64> {
    let r = &xs[0];
    let n = xs.len() as f64;
    (0..r.len())
        .map(|k| r[k] + xs.iter().map(|x| x[k] - r[k]).sum::<f64>() / n)
        .collect()
}

/// IF2: a swarm of parameter particles is perturbed at every step, filtered
/// together with the states and recentred pass after pass under cooling.
pub fn iterated_filtering(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    theta0: &ParamVector,
    opts: &IteratedFilteringOptions,
    seed: u64,
) -> Result<IteratedFilteringResult> {
    model.check(data, theta0)?;
    let spec = model.spec();
    let x0 = spec.to_unconstrained(theta0)?;
    let p = x0.len();
    if opts.schedule.sds.len() != p {
        return Err(SsmError::Config(format!(
            "cooling schedule has {} SDs for {p} free parameters",
            opts.schedule.sds.len()
        )));
    }
    let n = opts.particles;
    if n == 0 {
        return Err(SsmError::Config("particle count must be positive".into()));
    }
    let steps = model.num_steps(data);
    let per_step = 1.0 / (steps.max(1) as f64).sqrt();
    let mut trace = vec![theta0.clone()];
    let mut pass_logliks = Vec::with_capacity(opts.passes);
    let mut swarm = vec![x0; n];

    let perturb = |swarm: &mut Vec<Vec<f64>>, sd: &[f64], key: [u64; 3]| {
        let blocks = n.div_ceil(BLOCK);
        let moved: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = derive_rng(seed, &[TAG_PERTURB, key[0], key[1], key[2], b as u64]);
                (b * BLOCK..((b + 1) * BLOCK).min(n))
                    .map(|i| {
                        swarm[i]
                            .iter()
                            .zip(sd)
                            .map(|(x, s)| {
                                if *s > 0.0 {
                                    let e: f64 = StandardNormal.sample(&mut rng);
                                    x + s * e
                                } else {
                                    *x
                                }
                            })
                            .collect::<Vec<f64>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        *swarm = moved;
    };
    let thetas_of = |swarm: &[Vec<f64>]| -> Result<Vec<ParamVector>> {
        swarm.par_iter().map(|x| spec.from_unconstrained_with(theta0, x)).collect()
    };

    for pass in 0..opts.passes {
        let sd = opts.schedule.sd_at(pass);
        let sd_step: Vec<f64> = sd.iter().map(|s| s * per_step).collect();
        perturb(&mut swarm, &sd, [pass as u64, u64::MAX, 0]);
        let thetas = thetas_of(&swarm)?;
        let key = [TAG_PERTURB ^ 0xABCD, pass as u64];
        let mut states = initial_particles(model, data, ThetaSource::PerParticle(&thetas), n, &[seed, key[0], key[1]]);
        let mut thetas = thetas;
        let mut ll = 0.0;
        for t in 0..steps {
            if t > 0 {
                perturb(&mut swarm, &sd_step, [pass as u64, t as u64, 1]);
                thetas = thetas_of(&swarm)?;
            }
            states = propagate(model, data, t, &states, ThetaSource::PerParticle(&thetas), &[seed, key[0], key[1]]);
            if !model.observed_at(data, t) {
                continue;
            }
            let logg: Vec<f64> = states
                .par_iter()
                .zip(thetas.par_iter())
                .map(|(z, th)| model.observation_log_density(data, t, z, th))
                .collect();
            let inc = log_sum_exp(&logg) - (n as f64).ln();
            if !inc.is_finite() {
                return Err(SsmError::numerical(
                    t,
                    format!("iterated filtering pass {pass}: every particle has zero likelihood"),
                ));
            }
            ll += inc;
            let w = normalize(&logg);
            let u: f64 = derive_rng(seed, &[TAG_RESAMPLE, key[0], key[1], t as u64]).random();
            let idx = systematic_with(&w, n, u)?;
            states = idx.iter().map(|&i| states[i].clone()).collect();
            swarm = idx.iter().map(|&i| swarm[i].clone()).collect();
            thetas = idx.iter().map(|&i| thetas[i].clone()).collect();
        }
        pass_logliks.push(ll);
        trace.push(spec.from_unconstrained_with(theta0, &swarm_mean(&swarm))?);
    }
    let theta = trace.last().unwrap().clone();
    let fin = bootstrap_filter(model, data, &theta, &ParticleOptions::new(n), crate::rng::derive_seed(seed, &[TAG_FINAL]))?;
    Ok(IteratedFilteringResult { trace, pass_logliks, theta, loglik: fin.loglik })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::kalman_filter;
    use crate::model::{regular_template, simulate};
    use crate::stats::normal_logpdf;
    use crate::zoo::make_ndlm;

    fn toy(t_len: usize, sp: f64, so: f64, seed: u64) -> (Box<dyn StateSpaceModel>, ParamVector, TimeSeriesData) {
        let m = make_ndlm(1.0, 1.0, sp, so, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(t_len, 1).unwrap(), seed).unwrap();
        (Box::new(m), th, sim.data)
    }

    #[test]
    fn uniform_weights_copy_each_once() {
        let w = vec![0.25; 4];
        for seed in 0..20 {
            assert_eq!(systematic_resample(&w, 4, seed).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn point_mass_weight() {
        let w = vec![0.0, 0.0, 1.0, 0.0];
        assert_eq!(systematic_resample(&w, 5, 3).unwrap(), vec![2; 5]);
        assert!(systematic_resample(&[0.0, 0.0], 2, 1).is_err());
    }

    #[test]
    fn systematic_is_unbiased() {
        let w = [0.05, 0.3, 0.15, 0.4, 0.1];
        let n = 7;
        let reps = 100_000;
        let mut counts = [0.0f64; 5];
        let mut sq = [0.0f64; 5];
        for r in 0..reps {
            let idx = systematic_resample(&w, n, r).unwrap();
            for (k, c) in counts.iter_mut().enumerate() {
                let x = idx.iter().filter(|&&i| i == k).count() as f64;
                *c += x;
                sq[k] += x * x;
            }
        }
        for k in 0..5 {
            let m = counts[k] / reps as f64;
            let sd = (sq[k] / reps as f64 - m * m).max(1e-12).sqrt();
            let se = sd / (reps as f64).sqrt();
            assert!((m - n as f64 * w[k]).abs() < 3.0 * se + 1e-9, "k={k} m={m}");
        }
    }

    #[test]
    fn uninformative_observations_keep_weights_uniform() {
        let (m, th, data) = toy(10, 0.1, 1e8, 1);
        let r = sis_filter(m.as_ref(), &data, &th, 500, 3).unwrap();
        for e in &r.ess {
            assert!((e - 500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_process_gives_direct_product() {
        let m = make_ndlm(1.0, 1.0, 0.0, 0.3, 0.5).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(15, 1).unwrap(), 2).unwrap();
        let r = bootstrap_filter(&m, &sim.data, &th, &ParticleOptions::new(100), 5).unwrap();
        let direct: f64 = (0..15).map(|t| normal_logpdf(sim.data.y(t).unwrap(), 0.5, 0.3)).sum();
        assert!((r.loglik - direct).abs() < 1e-9);
    }

    #[test]
    fn single_step_is_unbiased_on_likelihood_scale() {
        let (m, th, data) = toy(1, 0.5, 0.3, 4);
        let exact = kalman_filter(m.as_ref(), &data, &th).unwrap().loglik.exp();
        let reps = 1000;
        let vals: Vec<f64> = (0..reps).map(|s| sis_filter(m.as_ref(), &data, &th, 50, s).unwrap().loglik.exp()).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = crate::stats::sample_sd(&vals).unwrap();
        assert!((mean - exact).abs() < 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn bootstrap_close_to_kalman() {
        let (m, th, data) = toy(30, 0.2, 0.2, 9);
        let exact = kalman_filter(m.as_ref(), &data, &th).unwrap().loglik;
        let r = bootstrap_filter(m.as_ref(), &data, &th, &ParticleOptions::new(4000), 1).unwrap();
        assert!((r.loglik - exact).abs() < 0.3);
        assert!(r.ess.iter().all(|&e| e >= 1.0 - 1e-9 && e <= 4000.0 + 1e-9));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (m, th, data) = toy(25, 0.2, 0.1, 2);
        let opts = ParticleOptions { particles: 1500, keep_path: true, predictive: true, ..ParticleOptions::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| bootstrap_filter(m.as_ref(), &data, &th, &opts, 77).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
        assert_eq!(a.path, b.path);
        assert_eq!(a.means, b.means);
    }

    #[test]
    fn path_has_full_length() {
        let (m, th, data) = toy(12, 0.2, 0.1, 2);
        let opts = ParticleOptions { particles: 200, keep_path: true, ..ParticleOptions::default() };
        let r = bootstrap_filter(m.as_ref(), &data, &th, &opts, 1).unwrap();
        let path = r.path.unwrap();
        assert_eq!(path.len(), 13);
        assert_eq!(path[0], vec![0.0]);
    }

    #[test]
    fn zero_perturbation_keeps_theta() {
        let (m, th, data) = toy(20, 0.2, 0.1, 2);
        let opts = IteratedFilteringOptions {
            passes: 3,
            particles: 100,
            schedule: CoolingSchedule::uniform(m.spec().n_free(), 0.0, 0.97).unwrap(),
        };
        let r = iterated_filtering(m.as_ref(), &data, &th, &opts, 4).unwrap();
        assert_eq!(r.trace.len(), 4);
        for t in &r.trace {
            for (a, b) in t.values().iter().zip(th.values()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cooling_validation() {
        assert!(CoolingSchedule::uniform(2, 0.1, 1.0).is_err());
        assert!(CoolingSchedule::uniform(2, -0.1, 0.5).is_err());
    }
}
