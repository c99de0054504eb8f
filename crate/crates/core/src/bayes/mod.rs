//! Bayesian fitting: random-walk Metropolis on a marginal likelihood,
//! Metropolis-within-Gibbs with FFBS state draws, particle-marginal MH,
//! convergence diagnostics and data cloning.

mod convergence;
mod prior;

pub use convergence::{data_cloning, gelman_rubin, CloningReport, RHAT_THRESHOLD};
pub use prior::{Prior, PriorSpec};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::{marginal_loglik, Backend};
use crate::kalman::{ffbs_with, kalman_filter};
use crate::model::{joint_log_likelihood, InitialState, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::{derive_rng, derive_seed, SsmRng};
use crate::smc::{bootstrap_filter, ParticleOptions};

#[derive(Clone, Debug)]
pub struct McmcOptions {
    pub chains: usize,
    /// Iterations per chain, warm-up included.
    pub iters: usize,
    /// Discarded warm-up length; half of `iters` when absent.
    pub warmup: Option<usize>,
    /// Initial proposal SDs on the transformed scale (0.1 each when absent).
    pub proposal_sds: Option<Vec<f64>>,
    /// Tune the proposal during warm-up toward 25–40% acceptance.
    pub adapt: bool,
    /// Starting point; the model's nominal values when absent.
    pub init: Option<ParamVector>,
    /// SD of the transformed-scale jitter applied to each chain's start.
    pub init_jitter: f64,
    /// Store a state trajectory per retained draw where the sampler produces one.
    pub keep_states: bool,
    /// Names whose values must stay strictly increasing (label-switching guard).
    pub ordering: Option<Vec<String>>,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            chains: 4,
            iters: 4000,
            warmup: None,
            proposal_sds: None,
            adapt: true,
            init: None,
            init_jitter: 0.3,
            keep_states: false,
            ordering: None,
        }
    }
}

impl McmcOptions {
    pub fn warmup_len(&self) -> usize {
        self.warmup.unwrap_or(self.iters / 2)
    }
}

/// Retained draws, `[chain][draw][parameter]` on the natural scale.
#[derive(Clone, Debug)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub draws: Vec<Vec<Vec<f64>>>,
    pub log_posterior: Vec<Vec<f64>>,
    pub loglik: Vec<Vec<f64>>,
    /// `[chain][draw]` trajectories `z_0..z_T`, when kept.
    pub states: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    pub acceptance: Vec<f64>,
    pub warmup: usize,
    /// Parameter values for everything not sampled.
    pub base: ParamVector,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, |c| c.len())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All draws of parameter `k`, chains concatenated.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().flat_map(|c| c.iter().map(move |d| d[k])).collect()
    }

    pub fn mean(&self, k: usize) -> f64 {
        crate::stats::mean(&self.column(k))
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.names.len()).map(|k| self.mean(k)).collect()
    }

    /// Monte Carlo standard error of the posterior mean by batch means.
    pub fn mcse(&self, k: usize) -> f64 {
        let n = self.n_draws();
        let b = ((n as f64).sqrt().floor() as usize).max(1);
        let a = n / b;
        let mut batch_means = Vec::new();
        for c in &self.draws {
            for j in 0..a {
                batch_means.push(c[j * b..(j + 1) * b].iter().map(|d| d[k]).sum::<f64>() / b as f64);
            }
        }
        let s2 = crate::stats::sample_variance(&batch_means).unwrap_or(0.0);
        (s2 * b as f64 / (batch_means.len() * b) as f64).sqrt()
    }

    /// Full parameter vector for one draw.
    pub fn theta(&self, chain: usize, draw: usize) -> ParamVector {
        let mut th = self.base.clone();
        for (n, v) in self.names.iter().zip(&self.draws[chain][draw]) {
            th.set(n, *v).expect("sampled name");
        }
        th
    }

    /// Every draw as a parameter vector, chain-major.
    pub fn thetas(&self) -> Vec<ParamVector> {
        (0..self.n_chains()).flat_map(|c| (0..self.n_draws()).map(move |d| (c, d))).map(|(c, d)| self.theta(c, d)).collect()
    }

    /// Posterior mean computed on the transformed scale, mapped back.
    pub fn transformed_mean(&self, model: &dyn StateSpaceModel) -> Result<ParamVector> {
        let spec = model.spec();
        let xs: Vec<Vec<f64>> = self.thetas().iter().map(|t| spec.to_unconstrained(t)).collect::<Result<_>>()?;
        let n = xs.len() as f64;
        let m: Vec<f64> = (0..self.names.len()).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect();
        spec.from_unconstrained_with(&self.base, &m)
    }
}

/// Proposal tuner: scale adaptation throughout warm-up, covariance learning at its midpoint.
struct Proposal {
    chol: DMatrix<f64>,
    scale: f64,
    adapt: bool,
    warmup: usize,
    window_acc: usize,
    window_len: usize,
    history: Vec<Vec<f64>>,
}

impl Proposal {
    fn new(sds: &[f64], adapt: bool, warmup: usize) -> Self {
        Self {
            chol: DMatrix::from_diagonal(&DVector::from_column_slice(sds)),
            scale: 1.0,
            adapt,
            warmup,
            window_acc: 0,
            window_len: 0,
            history: Vec::new(),
        }
    }

    fn draw(&self, x: &[f64], rng: &mut SsmRng) -> Vec<f64> {
        let d = x.len();
        let e = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &self.chol * e * self.scale;
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    fn record(&mut self, iter: usize, accepted: bool, x: &[f64]) {
        if !self.adapt || iter >= self.warmup {
            return;
        }
        self.window_acc += accepted as usize;
        self.window_len += 1;
        if iter >= self.warmup / 4 {
            self.history.push(x.to_vec());
        }
        if self.window_len == 50 {
            let rate = self.window_acc as f64 / 50.0;
            if rate < 0.25 {
                self.scale *= 0.75;
            } else if rate > 0.4 {
                self.scale *= 1.3;
            }
            self.window_acc = 0;
            self.window_len = 0;
        }
        if iter + 1 == self.warmup / 2 && self.history.len() >= 100 && x.len() > 1 {
            let d = x.len();
            let n = self.history.len() as f64;
            let m: Vec<f64> = (0..d).map(|k| self.history.iter().map(|h| h[k]).sum::<f64>() / n).collect();
            let mut cov = DMatrix::zeros(d, d);
            for h in &self.history {
                for i in 0..d {
                    for j in 0..d {
                        cov[(i, j)] += (h[i] - m[i]) * (h[j] - m[j]) / (n - 1.0);
                    }
                }
            }
            let jitter = 1e-10 * (0..d).map(|i| cov[(i, i)]).fold(0.0, f64::max).max(1e-300);
            cov *= 2.38f64.powi(2) / d as f64;
            for i in 0..d {
                cov[(i, i)] += jitter;
            }
            if let Some(c) = cov.cholesky() {
                self.chol = c.l();
                self.scale = 1.0;
            }
        }
    }
}

fn ordering_ok(theta: &ParamVector, ordering: &Option<Vec<String>>) -> bool {
    match ordering {
        None => true,
        Some(names) => names
            .windows(2)
            .all(|w| matches!((theta.get(&w[0]), theta.get(&w[1])), (Some(a), Some(b)) if a < b)),
    }
}

type Trajectory = Vec<Vec<f64>>;

/// Log-likelihood and optional trajectory at θ, given a per-evaluation seed.
type LikFn<'a> = dyn Fn(&ParamVector, u64) -> Result<(f64, Option<Trajectory>)> + Sync + 'a;

struct ChainOut {
    draws: Vec<Vec<f64>>,
    log_post: Vec<f64>,
    loglik: Vec<f64>,
    states: Vec<Trajectory>,
    acceptance: f64,
}

fn proposal_sds(opts: &McmcOptions, d: usize) -> Result<Vec<f64>> {
    match &opts.proposal_sds {
        Some(s) if s.len() == d => Ok(s.clone()),
        Some(s) => Err(SsmError::Config(format!("{} proposal SDs given for {d} free parameters", s.len()))),
        None => Ok(vec![0.1; d]),
    }
}

fn start_point(model: &dyn StateSpaceModel, opts: &McmcOptions) -> Result<(ParamVector, Vec<f64>)> {
    let init = opts.init.clone().unwrap_or_else(|| model.spec().nominal());
    let x0 = model.spec().to_unconstrained(&init)?;
    Ok((init, x0))
}

fn check_common(model: &dyn StateSpaceModel, priors: &PriorSpec, opts: &McmcOptions) -> Result<()> {
    priors.check(model.spec())?;
    if opts.chains == 0 || opts.iters <= opts.warmup_len() {
        return Err(SsmError::Config("need at least one chain and more iterations than warm-up".into()));
    }
    Ok(())
}

/// Generic pseudo-marginal MH on the transformed scale with target π(θ)·L(θ)^power.
fn run_mh(
    model: &dyn StateSpaceModel,
    priors: &PriorSpec,
    opts: &McmcOptions,
    seed: u64,
    power: f64,
    lik: &LikFn<'_>,
) -> Result<PosteriorSamples> {
    check_common(model, priors, opts)?;
    let spec = model.spec();
    let (base, x0) = start_point(model, opts)?;
    let d = x0.len();
    let sds = proposal_sds(opts, d)?;
    let warmup = opts.warmup_len();
    let log_target = |x: &[f64], eval_seed: u64| -> Result<(f64, f64, Option<Trajectory>)> {
        let th = spec.from_unconstrained_with(&base, x)?;
        let lp = priors.log_density(spec, &th) + spec.log_jacobian(x);
        if !lp.is_finite() || !ordering_ok(&th, &opts.ordering) {
            return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY, None));
        }
        let (ll, path) = lik(&th, eval_seed)?;
        Ok((lp + power * ll, ll, path))
    };
    {
        let (lt, _, _) = log_target(&x0, derive_seed(seed, &[u64::MAX]))?;
        if !lt.is_finite() {
            return Err(SsmError::Config("posterior density is zero at the initial values".into()));
        }
    }
    let chains: Vec<Result<ChainOut>> = (0..opts.chains)
        .into_par_iter()
        .map(|c| -> Result<ChainOut> {
            let mut rng = derive_rng(seed, &[c as u64]);
            let mut x = x0.clone();
            let mut cur = (f64::NEG_INFINITY, f64::NEG_INFINITY, None);
            for attempt in 0..100u64 {
                let cand: Vec<f64> = if attempt == 99 {
                    x0.clone()
                } else {
                    x0.iter().map(|v| v + opts.init_jitter * rng.sample::<f64, _>(StandardNormal)).collect()
                };
                let t = log_target(&cand, derive_seed(seed, &[c as u64, u64::MAX - 1, attempt])).unwrap_or((f64::NEG_INFINITY, 0.0, None));
                if t.0.is_finite() {
                    x = cand;
                    cur = t;
                    break;
                }
            }
            if !cur.0.is_finite() {
                return Err(SsmError::Config(format!("chain {c} found no starting point with positive density")));
            }
            let mut prop = Proposal::new(&sds, opts.adapt, warmup);
            let mut out = ChainOut { draws: vec![], log_post: vec![], loglik: vec![], states: vec![], acceptance: 0.0 };
            let mut accepted = 0usize;
            for it in 0..opts.iters {
                let cand = prop.draw(&x, &mut rng);
                let t = log_target(&cand, derive_seed(seed, &[c as u64, it as u64])).unwrap_or((f64::NEG_INFINITY, 0.0, None));
                let u: f64 = rng.random();
                let acc = t.0.is_finite() && u.ln() < t.0 - cur.0;
                if acc {
                    x = cand;
                    cur = t;
                }
                prop.record(it, acc, &x);
                if it >= warmup {
                    accepted += acc as usize;
                    out.draws.push(spec.from_unconstrained_with(&base, &x)?.values().to_vec());
                    out.log_post.push(cur.0);
                    out.loglik.push(cur.1);
                    if opts.keep_states {
                        if let Some(p) = &cur.2 {
                            out.states.push(p.clone());
                        }
                    }
                }
            }
            out.acceptance = accepted as f64 / (opts.iters - warmup) as f64;
            Ok(out)
        })
        .collect();
    assemble(model, base, chains, warmup, opts.keep_states)
}

fn assemble(
    model: &dyn StateSpaceModel,
    base: ParamVector,
    chains: Vec<Result<ChainOut>>,
    warmup: usize,
    keep_states: bool,
) -> Result<PosteriorSamples> {
    let spec = model.spec();
    let free = spec.free_indices();
    let names = spec.free_names();
    let mut s = PosteriorSamples {
        names,
        draws: vec![],
        log_posterior: vec![],
        loglik: vec![],
        states: None,
        acceptance: vec![],
        warmup,
        base,
    };
    let mut states = Vec::new();
    for c in chains {
        let c = c?;
        s.draws.push(c.draws.iter().map(|full| free.iter().map(|&i| full[i]).collect()).collect());
        s.log_posterior.push(c.log_post);
        s.loglik.push(c.loglik);
        s.acceptance.push(c.acceptance);
        states.push(c.states);
    }
    if keep_states && states.iter().all(|c| c.len() == s.n_draws()) {
        s.states = Some(states);
    }
    Ok(s)
}

/// Random-walk Metropolis with a deterministic marginal likelihood.
pub fn rw_metropolis(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    priors: &PriorSpec,
    backend: &Backend,
    opts: &McmcOptions,
    seed: u64,
) -> Result<PosteriorSamples> {
    tempered_metropolis(model, data, priors, backend, opts, seed, 1.0)
}

/// Random-walk Metropolis on π(θ)·L(θ)^power; `power = K` is K-fold data cloning.
pub(crate) fn tempered_metropolis(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    priors: &PriorSpec,
    backend: &Backend,
    opts: &McmcOptions,
    seed: u64,
    power: f64,
) -> Result<PosteriorSamples> {
    if let Backend::Particle { .. } = backend {
        return Err(SsmError::Config("random-walk Metropolis needs a deterministic likelihood; use pmmh for particle filters".into()));
    }
    let (init, _) = start_point(model, opts)?;
    model.check(data, &init)?;
    backend.check(model, data, &init)?;
    let backend = backend.resolved(model, data, &init)?;
    let lik = |th: &ParamVector, _s: u64| -> Result<(f64, Option<Trajectory>)> {
        let ll = marginal_loglik(model, data, th, &backend)?;
        let path = if opts.keep_states && matches!(backend, Backend::Kalman) {
            let f = kalman_filter(model, data, th)?;
            Some(crate::kalman::kalman_smoother(&f)?.iter().map(|b| b.mean.iter().cloned().collect()).collect())
        } else {
            None
        };
        Ok((ll, path))
    };
    run_mh(model, priors, opts, seed, power, &lik)
}

/// Particle-marginal MH: the bootstrap estimate replaces the likelihood, redrawn per proposal.
pub fn pmmh(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    priors: &PriorSpec,
    particles: usize,
    opts: &McmcOptions,
    seed: u64,
) -> Result<PosteriorSamples> {
    let (init, _) = start_point(model, opts)?;
    model.check(data, &init)?;
    let popts = ParticleOptions { particles, keep_path: opts.keep_states, ..ParticleOptions::default() };
    let lik = |th: &ParamVector, s: u64| -> Result<(f64, Option<Trajectory>)> {
        match bootstrap_filter(model, data, th, &popts, s) {
            Ok(r) => Ok((r.loglik, r.path)),
            Err(SsmError::Depletion { .. }) => Ok((f64::NEG_INFINITY, None)),
            Err(e) => Err(e),
        }
    };
    run_mh(model, priors, opts, seed, 1.0, &lik)
}

/// Metropolis-within-Gibbs: MH on θ given states (joint likelihood), then an exact FFBS state draw.
pub fn gibbs_ffbs(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    priors: &PriorSpec,
    opts: &McmcOptions,
    seed: u64,
) -> Result<PosteriorSamples> {
    check_common(model, priors, opts)?;
    let spec = model.spec();
    let (base, x0) = start_point(model, opts)?;
    model.check(data, &base)?;
    Backend::Kalman.check(model, data, &base)?;
    let fixed_init = matches!(model.initial_state(data, &base), InitialState::Fixed(_));
    let d = x0.len();
    let sds = proposal_sds(opts, d)?;
    let warmup = opts.warmup_len();
    let log_target = |x: &[f64], states: &[Vec<f64>]| -> f64 {
        let Ok(th) = spec.from_unconstrained_with(&base, x) else { return f64::NEG_INFINITY };
        let lp = priors.log_density(spec, &th) + spec.log_jacobian(x);
        if !lp.is_finite() || !ordering_ok(&th, &opts.ordering) {
            return f64::NEG_INFINITY;
        }
        // with a fixed z_0 the parameter value, not the sampled copy, starts the chain
        let z = if fixed_init { &states[1..] } else { states };
        lp + joint_log_likelihood(model, &th, z, data).unwrap_or(f64::NEG_INFINITY)
    };
    let chains: Vec<Result<ChainOut>> = (0..opts.chains)
        .into_par_iter()
        .map(|c| -> Result<ChainOut> {
            let mut rng = derive_rng(seed, &[c as u64]);
            let mut x: Vec<f64> = x0.iter().map(|v| v + opts.init_jitter * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut th = match spec.from_unconstrained_with(&base, &x) {
                Ok(t) if priors.log_density(spec, &t).is_finite() => t,
                _ => {
                    x = x0.clone();
                    base.clone()
                }
            };
            let mut states = ffbs_with(&kalman_filter(model, data, &th)?, &mut rng);
            let mut prop = Proposal::new(&sds, opts.adapt, warmup);
            let mut out = ChainOut { draws: vec![], log_post: vec![], loglik: vec![], states: vec![], acceptance: 0.0 };
            let mut accepted = 0usize;
            for it in 0..opts.iters {
                let cur = log_target(&x, &states);
                let cand = prop.draw(&x, &mut rng);
                let t = log_target(&cand, &states);
                let u: f64 = rng.random();
                let acc = t.is_finite() && u.ln() < t - cur;
                if acc {
                    x = cand;
                    th = spec.from_unconstrained_with(&base, &x)?;
                }
                prop.record(it, acc, &x);
                states = ffbs_with(&kalman_filter(model, data, &th)?, &mut rng);
                if it >= warmup {
                    accepted += acc as usize;
                    out.draws.push(th.values().to_vec());
                    out.log_post.push(log_target(&x, &states));
                    let z = if fixed_init { &states[1..] } else { &states[..] };
                    out.loglik.push(joint_log_likelihood(model, &th, z, data)?);
                    if opts.keep_states {
                        out.states.push(states.clone());
                    }
                }
            }
            out.acceptance = accepted as f64 / (opts.iters - warmup) as f64;
            Ok(out)
        })
        .collect();
    assemble(model, base, chains, warmup, opts.keep_states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regular_template, simulate};
    use crate::zoo::make_ndlm;

    fn toy_data(t_len: usize, seed: u64) -> (crate::zoo::Ndlm, TimeSeriesData) {
        let mut m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        m.spec_mut().fix("z0", 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(t_len, 1).unwrap(), seed).unwrap();
        (m, sim.data)
    }

    fn priors() -> PriorSpec {
        PriorSpec::new()
            .with("sigma_p", Prior::HalfNormal { sd: 1.0 })
            .with("sigma_o", Prior::HalfNormal { sd: 1.0 })
    }

    #[test]
    fn zero_prior_mass_at_start_is_config_error() {
        let (m, data) = toy_data(20, 1);
        let p = PriorSpec::new()
            .with("sigma_p", Prior::Uniform { lower: 1.0, upper: 2.0 })
            .with("sigma_o", Prior::HalfNormal { sd: 1.0 });
        let e = rw_metropolis(&m, &data, &p, &Backend::Kalman, &McmcOptions::default(), 1).unwrap_err();
        assert!(matches!(e, SsmError::Config(_)));
    }

    #[test]
    fn missing_prior_is_rejected() {
        let (m, data) = toy_data(20, 1);
        let p = PriorSpec::new().with("sigma_p", Prior::HalfNormal { sd: 1.0 });
        assert!(rw_metropolis(&m, &data, &p, &Backend::Kalman, &McmcOptions::default(), 1).is_err());
    }

    #[test]
    fn tiny_proposals_accept_almost_everything() {
        let (m, data) = toy_data(30, 2);
        let opts = McmcOptions {
            chains: 1,
            iters: 400,
            proposal_sds: Some(vec![1e-9, 1e-9]),
            adapt: false,
            init_jitter: 0.0,
            ..McmcOptions::default()
        };
        let s = rw_metropolis(&m, &data, &priors(), &Backend::Kalman, &opts, 3).unwrap();
        assert!(s.acceptance[0] > 0.95);
        let col = s.column(0);
        assert!((col[0] - col[col.len() - 1]).abs() < 1e-6);
    }

    #[test]
    fn deterministic_given_seed() {
        let (m, data) = toy_data(30, 2);
        let opts = McmcOptions { iters: 600, ..McmcOptions::default() };
        let a = rw_metropolis(&m, &data, &priors(), &Backend::Kalman, &opts, 9).unwrap();
        let b = rw_metropolis(&m, &data, &priors(), &Backend::Kalman, &opts, 9).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = pmmh(&m, &data, &priors(), 50, &McmcOptions { iters: 100, ..opts.clone() }, 9).unwrap();
        let d = pmmh(&m, &data, &priors(), 50, &McmcOptions { iters: 100, ..opts }, 9).unwrap();
        assert_eq!(c.draws, d.draws);
    }

    #[test]
    fn single_particle_pmmh_completes() {
        let (m, data) = toy_data(20, 2);
        let opts = McmcOptions { chains: 1, iters: 200, ..McmcOptions::default() };
        let s = pmmh(&m, &data, &priors(), 1, &opts, 1).unwrap();
        assert_eq!(s.n_draws(), 100);
        assert!(s.acceptance[0] < 0.5);
    }

    #[test]
    fn ordering_constraint_holds() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.3, 0.0).unwrap();
        let mut m = m;
        m.spec_mut().fix("z0", 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(40, 1).unwrap(), 4).unwrap();
        let opts = McmcOptions {
            iters: 1000,
            ordering: Some(vec!["sigma_p".into(), "sigma_o".into()]),
            init_jitter: 0.0,
            ..McmcOptions::default()
        };
        let s = rw_metropolis(&m, &sim.data, &priors(), &Backend::Kalman, &opts, 2).unwrap();
        for c in &s.draws {
            for d in c {
                assert!(d[0] < d[1]);
            }
        }
    }

    #[test]
    fn gibbs_keeps_states_and_matches_marginal_sampler() {
        let (m, data) = toy_data(40, 5);
        let opts = McmcOptions { chains: 2, iters: 6000, keep_states: true, ..McmcOptions::default() };
        let g = gibbs_ffbs(&m, &data, &priors(), &opts, 3).unwrap();
        let states = g.states.as_ref().unwrap();
        assert_eq!(states[0][0].len(), 41);
        let r = rw_metropolis(&m, &data, &priors(), &Backend::Kalman, &McmcOptions { keep_states: true, ..opts }, 3).unwrap();
        // posterior state means at a middle step agree within MC error
        let mid = 20;
        let avg = |s: &PosteriorSamples| {
            let st = s.states.as_ref().unwrap();
            let all: Vec<f64> = st.iter().flat_map(|c| c.iter().map(|tr| tr[mid][0])).collect();
            crate::stats::mean(&all)
        };
        assert!((avg(&g) - avg(&r)).abs() < 0.05, "{} vs {}", avg(&g), avg(&r));
    }
}
