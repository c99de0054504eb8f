//! Information criteria and model weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::PosteriorSamples;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::{fit_mle, loglik_terms, marginal_loglik, Backend, FitOptions, FitResult};
use crate::model::{regular_template, simulate, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::derive_seed;
use crate::stats::{log_sum_exp, mean, sample_variance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// States integrated out.
    Marginal,
    /// Conditional on sampled states.
    Conditional,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub value: f64,
    pub effective_params: Option<f64>,
    pub mode: LikelihoodMode,
    pub loglik: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn mle_report(criterion: &str, fit: &FitResult, value: f64, k: f64) -> CriterionReport {
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push("fit did not converge".into());
    }
    if matches!(fit.backend, Backend::Particle { .. }) {
        warnings.push("likelihood is a particle estimate".into());
    }
    CriterionReport {
        criterion: criterion.into(),
        value,
        effective_params: Some(k),
        mode: LikelihoodMode::Marginal,
        loglik: Some(fit.loglik),
        warnings,
    }
}

pub fn aic_value(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

pub fn aicc_value(loglik: f64, k: usize, n: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(SsmError::domain("T", format!("AICc needs more than k+1 = {} observations, got {n}", k + 1)));
    }
    let k = k as f64;
    Ok(aic_value(loglik, k as usize) + 2.0 * k * (k + 1.0) / (n as f64 - k - 1.0))
}

pub fn aic(fit: &FitResult) -> CriterionReport {
    mle_report("AIC", fit, aic_value(fit.loglik, fit.k()), fit.k() as f64)
}

/// Small-sample AIC with `n` the number of observed time points.
pub fn aicc(fit: &FitResult, n: usize) -> Result<CriterionReport> {
    Ok(mle_report("AICc", fit, aicc_value(fit.loglik, fit.k(), n)?, fit.k() as f64))
}

#[derive(Clone, Debug, Serialize)]
pub struct AicbReport {
    pub report: CriterionReport,
    pub aic: f64,
    /// Bootstrap penalty; 2k for AIC.
    pub penalty: f64,
    /// `−2 log[L(θ̂ⁱ|y)/L(θ̂|y)]` per successful replicate.
    pub terms: Vec<f64>,
    pub spread: Option<f64>,
    pub n_boot: usize,
    pub n_failed: usize,
}

/// Penalty `2·mean(terms)` from the per-replicate deviance gaps.
pub fn aicb_penalty(terms: &[f64]) -> f64 {
    2.0 * mean(terms)
}

/// Parametric-bootstrap AIC: simulate at θ̂, refit, and score each refit on the original data.
#[allow(clippy::too_many_arguments)]
pub fn aicb(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    fit: &FitResult,
    n_boot: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<AicbReport> {
    if n_boot == 0 {
        return Err(SsmError::Config("AICb needs at least one bootstrap replicate".into()));
    }
    let backend = &fit.backend;
    let template = if data.covariate_names().is_empty() && data.quality().is_none() {
        regular_template(data.len(), data.obs_dim())?
    } else {
        data.clone()
    };
    let mut fit_opts = opts.clone();
    fit_opts.hessian = false;
    let ll_hat = fit.loglik;
    let outcomes: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let sim = simulate(model, &fit.theta, &template, derive_seed(seed, &[i as u64])).ok()?;
            let refit = fit_mle(model, &sim.data, &unresolved(backend), Some(&fit.theta), &fit_opts).ok()?;
            let ll = marginal_loglik(model, data, &refit.theta, backend).ok()?;
            // θ̂ maximizes L(·|y); a negative gap only reflects optimizer tolerance
            ll.is_finite().then(|| (-2.0 * (ll - ll_hat)).max(0.0))
        })
        .collect();
    let terms: Vec<f64> = outcomes.iter().flatten().cloned().collect();
    let n_failed = n_boot - terms.len();
    if n_failed as f64 > 0.3 * n_boot as f64 {
        return Err(SsmError::Reliability(format!("{n_failed} of {n_boot} bootstrap refits failed")));
    }
    let penalty = aicb_penalty(&terms);
    let value = -2.0 * ll_hat + penalty;
    let mut report = mle_report("AICb", fit, value, penalty / 2.0);
    if n_failed > 0 {
        report.warnings.push(format!("{n_failed} bootstrap refits failed and were excluded"));
    }
    Ok(AicbReport {
        report,
        aic: aic_value(ll_hat, fit.k()),
        penalty,
        spread: sample_variance(&terms).map(|v| 2.0 * v.sqrt()),
        terms,
        n_boot,
        n_failed,
    })
}

/// Bootstrap datasets get their own grid placement.
fn unresolved(backend: &Backend) -> Backend {
    match backend {
        Backend::Grid { cells, .. } => Backend::Grid { cells: *cells, bounds: None },
        b => b.clone(),
    }
}

/// Draw indices `(chain, draw)` spread evenly, at most `max` of them.
fn selected_draws(samples: &PosteriorSamples, max: Option<usize>) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..samples.n_chains())
        .flat_map(|c| (0..samples.n_draws()).map(move |d| (c, d)))
        .collect();
    match max {
        Some(m) if m > 0 && m < all.len() => (0..m).map(|i| all[i * all.len() / m]).collect(),
        _ => all,
    }
}

/// Observation log-density at each step given `z_0..z_T` (or `z_1..z_T`).
fn conditional_terms(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, states: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = model.num_steps(data);
    let z = match states.len() {
        l if l == n + 1 => &states[1..],
        l if l == n => states,
        l => return Err(SsmError::Config(format!("state trajectory has {l} entries for {n} steps"))),
    };
    Ok((0..n).map(|t| model.observation_log_density(data, t, &z[t], theta)).collect())
}

fn require_states(samples: &PosteriorSamples) -> Result<&Vec<Vec<Vec<Vec<f64>>>>> {
    samples
        .states
        .as_ref()
        .ok_or_else(|| SsmError::Config("conditional criteria need state trajectories; rerun with states kept".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct DicReport {
    pub report: CriterionReport,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub p_d: f64,
}

/// `(DIC, p_D)` from per-draw deviances and the deviance at the posterior mean.
pub fn dic_from_deviances(deviances: &[f64], deviance_at_mean: f64) -> (f64, f64) {
    let p_d = mean(deviances) - deviance_at_mean;
    (deviance_at_mean + 2.0 * p_d, p_d)
}

/// Deviance information criterion. The posterior mean of θ is taken on the
/// transformed scale; conditional mode also averages the state draws.
pub fn dic(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    samples: &PosteriorSamples,
    mode: LikelihoodMode,
    backend: &Backend,
    max_draws: Option<usize>,
) -> Result<DicReport> {
    let idx = selected_draws(samples, max_draws);
    if idx.is_empty() {
        return Err(SsmError::Config("no posterior draws".into()));
    }
    let theta_bar = samples.transformed_mean(model)?;
    let (devs, d_bar) = match mode {
        LikelihoodMode::Marginal => {
            let backend = backend.resolved(model, data, &theta_bar)?;
            let devs = idx
                .par_iter()
                .map(|&(c, d)| Ok(-2.0 * marginal_loglik(model, data, &samples.theta(c, d), &backend)?))
                .collect::<Result<Vec<f64>>>()?;
            (devs, -2.0 * marginal_loglik(model, data, &theta_bar, &backend)?)
        }
        LikelihoodMode::Conditional => {
            let states = require_states(samples)?;
            let devs = idx
                .par_iter()
                .map(|&(c, d)| Ok(-2.0 * conditional_terms(model, data, &samples.theta(c, d), &states[c][d])?.iter().sum::<f64>()))
                .collect::<Result<Vec<f64>>>()?;
            let len = states[idx[0].0][idx[0].1].len();
            let dim = states[idx[0].0][idx[0].1][0].len();
            let mut z_bar = vec![vec![0.0; dim]; len];
            for &(c, d) in &idx {
                for (acc, z) in z_bar.iter_mut().zip(&states[c][d]) {
                    for (a, v) in acc.iter_mut().zip(z) {
                        *a += v / idx.len() as f64;
                    }
                }
            }
            (devs, -2.0 * conditional_terms(model, data, &theta_bar, &z_bar)?.iter().sum::<f64>())
        }
    };
    let (value, p_d) = dic_from_deviances(&devs, d_bar);
    let mut warnings = Vec::new();
    if p_d < 0.0 {
        warnings.push("negative effective number of parameters".into());
    }
    Ok(DicReport {
        report: CriterionReport { criterion: "DIC".into(), value, effective_params: Some(p_d), mode, loglik: None, warnings },
        mean_deviance: mean(&devs),
        deviance_at_mean: d_bar,
        p_d,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WaicReport {
    pub report: CriterionReport,
    pub lppd: f64,
    pub p_waic: f64,
    /// `−2·(lppd_t − p_t)` per observed step.
    pub pointwise: Vec<f64>,
}

/// WAIC from a `[draw][point]` matrix of log densities.
pub fn waic_from_matrix(logp: &[Vec<f64>]) -> Result<(f64, f64, Vec<f64>)> {
    if logp.len() < 2 {
        return Err(SsmError::Config("WAIC needs at least two posterior draws".into()));
    }
    let n_pts = logp[0].len();
    let s = logp.len() as f64;
    let mut lppd = 0.0;
    let mut p = 0.0;
    let mut pointwise = Vec::with_capacity(n_pts);
    for t in 0..n_pts {
        let col: Vec<f64> = logp.iter().map(|r| r[t]).collect();
        let l = log_sum_exp(&col) - s.ln();
        let v = sample_variance(&col).unwrap_or(0.0);
        lppd += l;
        p += v;
        pointwise.push(-2.0 * (l - v));
    }
    Ok((-2.0 * (lppd - p), p, pointwise))
}

/// Widely applicable information criterion. Marginal mode partitions the
/// likelihood into one-step predictive terms `p(y_t | y_{1:t-1}, θ)`.
pub fn waic(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    samples: &PosteriorSamples,
    mode: LikelihoodMode,
    backend: &Backend,
    max_draws: Option<usize>,
) -> Result<WaicReport> {
    let idx = selected_draws(samples, max_draws);
    let n = model.num_steps(data);
    let observed: Vec<usize> = (0..n).filter(|&t| model.observed_at(data, t)).collect();
    let rows: Vec<Vec<f64>> = match mode {
        LikelihoodMode::Marginal => {
            if matches!(backend, Backend::Particle { .. }) {
                return Err(SsmError::Config("marginal WAIC needs a deterministic filter".into()));
            }
            let backend = backend.resolved(model, data, &samples.transformed_mean(model)?)?;
            idx.par_iter()
                .map(|&(c, d)| loglik_terms(model, data, &samples.theta(c, d), &backend))
                .collect::<Result<_>>()?
        }
        LikelihoodMode::Conditional => {
            let states = require_states(samples)?;
            idx.par_iter()
                .map(|&(c, d)| conditional_terms(model, data, &samples.theta(c, d), &states[c][d]))
                .collect::<Result<_>>()?
        }
    };
    let logp: Vec<Vec<f64>> = rows.iter().map(|r| observed.iter().map(|&t| r[t]).collect()).collect();
    let (value, p_waic, pointwise) = waic_from_matrix(&logp)?;
    Ok(WaicReport {
        report: CriterionReport { criterion: "WAIC".into(), value, effective_params: Some(p_waic), mode, loglik: None, warnings: vec![] },
        lppd: -value / 2.0 + p_waic,
        p_waic,
        pointwise,
    })
}

/// `w_i ∝ exp(−Δ_i/2)`.
pub fn akaike_weights(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(SsmError::Config("weights need at least one finite criterion value".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = values.iter().map(|v| (-(v - min) / 2.0).exp()).collect();
    let s: f64 = raw.iter().sum();
    Ok(raw.iter().map(|r| r / s).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub criterion: String,
    pub value: f64,
    pub delta: f64,
    pub weight: f64,
}

/// Deltas and weights for one criterion over a set of models, in input order.
pub fn compare(criterion: &str, entries: &[(String, f64)]) -> Result<Vec<ComparisonRow>> {
    let values: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let w = akaike_weights(&values)?;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(entries
        .iter()
        .zip(w)
        .map(|((m, v), w)| ComparisonRow { model: m.clone(), criterion: criterion.into(), value: *v, delta: v - min, weight: w })
        .collect())
}

pub fn write_comparison_csv<W: std::io::Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{rw_metropolis, McmcOptions, Prior, PriorSpec};
    use crate::zoo::make_ndlm;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn aic_hand_values() {
        assert_eq!(aic_value(-10.0, 3), 26.0);
        assert_eq!(aic_value(-7.5, 0), 15.0);
        assert!((aicc_value(-10.0, 3, 1_000_000).unwrap() - 26.0).abs() < 1e-3);
        assert!(aicc_value(-10.0, 3, 4).is_err());
        assert_relative_eq!(aicc_value(-10.0, 3, 10).unwrap(), 26.0 + 24.0 / 6.0);
    }

    #[test]
    fn akaike_weight_values() {
        assert_eq!(akaike_weights(&[3.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        let w = akaike_weights(&[0.0, 2.0]).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(w[0], 1.0 / (1.0 + e), epsilon = 1e-12);
        assert_relative_eq!(w[1], e / (1.0 + e), epsilon = 1e-12);
        assert_relative_eq!(w[0], 0.731, epsilon = 1e-3);
        let w = akaike_weights(&[0.0, 200.0]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-40 && w[1] < 1e-40);
    }

    #[test]
    fn point_mass_dic_and_waic() {
        let (dic, p) = dic_from_deviances(&[12.0, 12.0, 12.0], 12.0);
        assert_eq!((dic, p), (12.0, 0.0));
        let row = vec![-1.0, -2.0, -0.5];
        let (w, p, _) = waic_from_matrix(&[row.clone(), row.clone(), row]).unwrap();
        assert_eq!(p, 0.0);
        assert_relative_eq!(w, 7.0, epsilon = 1e-12);
        assert!(waic_from_matrix(&[vec![0.0]]).is_err());
    }

    #[test]
    fn waic_brute_force_iid_normal() {
        // y ~ N(μ, 1), three points, two draws of μ
        let y = [0.3, -1.2, 0.8];
        let mus = [0.1, -0.4];
        let lp = |yv: f64, m: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (yv - m).powi(2);
        let logp: Vec<Vec<f64>> = mus.iter().map(|&m| y.iter().map(|&v| lp(v, m)).collect()).collect();
        let mut lppd = 0.0;
        let mut pw = 0.0;
        for v in y {
            let a = lp(v, mus[0]);
            let b = lp(v, mus[1]);
            lppd += ((a.exp() + b.exp()) / 2.0).ln();
            let m = (a + b) / 2.0;
            pw += (a - m).powi(2) + (b - m).powi(2);
        }
        let (w, p, _) = waic_from_matrix(&logp).unwrap();
        assert!((p - pw).abs() < 1e-10);
        assert!((w - (-2.0 * (lppd - pw))).abs() < 1e-10);
    }

    #[test]
    fn comparison_is_order_invariant() {
        let a = compare("AIC", &[("m1".into(), 10.0), ("m2".into(), 12.5), ("m3".into(), 11.0)]).unwrap();
        let b = compare("AIC", &[("m3".into(), 11.0), ("m1".into(), 10.0), ("m2".into(), 12.5)]).unwrap();
        for r in &a {
            let s = b.iter().find(|x| x.model == r.model).unwrap();
            assert_relative_eq!(r.weight, s.weight, epsilon = 1e-15);
            assert_eq!(r.delta, s.delta);
        }
        let mut buf = Vec::new();
        write_comparison_csv(&a, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("model,criterion,value,delta,weight"));
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(vals in proptest::collection::vec(-1e3f64..1e3, 1..8)) {
            let w = akaike_weights(&vals).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
        }
    }

    fn toy(sigma_o: f64) -> crate::zoo::Ndlm {
        let mut m = make_ndlm(1.0, 1.0, 0.1, sigma_o, 0.0).unwrap();
        m.spec_mut().fix("z0", 0.0).unwrap();
        m.spec_mut().fix("sigma_o", sigma_o).unwrap();
        m
    }

    #[test]
    fn aicb_penalty_is_nonnegative_and_close_to_aic() {
        let m = toy(0.1);
        let sim = simulate(&m, &m.spec().nominal(), &regular_template(200, 1).unwrap(), 4).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        let r = aicb(&m, &sim.data, &fit, 40, 1, &FitOptions::default()).unwrap();
        assert!(r.penalty >= 0.0 && r.terms.iter().all(|t| *t >= 0.0));
        assert!((r.report.value - r.aic).abs() < 4.0, "{} vs {}", r.report.value, r.aic);
    }

    #[test]
    fn marginal_waic_terms_sum_to_loglik() {
        let m = toy(0.1);
        let sim = simulate(&m, &m.spec().nominal(), &regular_template(60, 1).unwrap(), 2).unwrap();
        let priors = PriorSpec::new().with("sigma_p", Prior::HalfNormal { sd: 1.0 });
        let s = rw_metropolis(&m, &sim.data, &priors, &Backend::Kalman, &McmcOptions { iters: 400, ..Default::default() }, 1).unwrap();
        for th in s.thetas().iter().take(20) {
            let terms = loglik_terms(&m, &sim.data, th, &Backend::Kalman).unwrap();
            let ll = marginal_loglik(&m, &sim.data, th, &Backend::Kalman).unwrap();
            assert!((terms.iter().sum::<f64>() - ll).abs() < 1e-8);
        }
        let w = waic(&m, &sim.data, &s, LikelihoodMode::Marginal, &Backend::Kalman, Some(200)).unwrap();
        assert_eq!(w.pointwise.len(), 60);
        let d = dic(&m, &sim.data, &s, LikelihoodMode::Marginal, &Backend::Kalman, Some(200)).unwrap();
        assert!(d.p_d.abs() < 3.0);
        assert!(dic(&m, &sim.data, &s, LikelihoodMode::Conditional, &Backend::Kalman, None).is_err());
    }
}
