//! Profile likelihoods, Hessian eigen-analysis and simulation-based estimability.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::{fit_mle, marginal_loglik, nelder_mead, Backend, FitOptions, FitResult, NelderMeadOptions};
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{regular_template, simulate, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::derive_seed;
use crate::stats::{mean, sample_sd};

#[derive(Clone, Debug)]
pub struct ProfileOptions {
    /// Explicit grid of natural-scale values; defaults to θ̂ ± 3 SE over 21 points.
    pub grid: Option<Vec<f64>>,
    pub points: usize,
    /// Flatness (max − min log-likelihood) below which the profile is flagged flat.
    pub threshold: f64,
    pub optimizer: NelderMeadOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { grid: None, points: 21, threshold: 0.5, optimizer: NelderMeadOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileCurve {
    pub param: String,
    pub grid: Vec<f64>,
    pub loglik: Vec<f64>,
    pub converged: Vec<bool>,
    pub max_loglik: f64,
    pub flatness: f64,
    pub threshold: f64,
    pub flat: bool,
}

fn default_grid(fit: &FitResult, k: usize, points: usize, transform: &crate::params::Transform) -> Vec<f64> {
    let center = fit.theta.get(&fit.free_names[k]).unwrap();
    let span = |lo: f64, hi: f64| -> Vec<f64> {
        (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64).collect()
    };
    if let Some(se) = &fit.se {
        let g = span(center - 3.0 * se[k], center + 3.0 * se[k]);
        if g.iter().all(|v| transform.in_support(*v)) {
            return g;
        }
        // fall back to the transformed scale, where ±3 SE stays in support
        let sx = fit.se_transformed.as_ref().unwrap()[k];
        return span(fit.x[k] - 3.0 * sx, fit.x[k] + 3.0 * sx).into_iter().map(|x| transform.inverse(x)).collect();
    }
    let half = 0.5 * center.abs().max(1e-8);
    let g = span(center - half, center + half);
    if g.iter().all(|v| transform.in_support(*v)) {
        g
    } else {
        span(fit.x[k] - 0.5, fit.x[k] + 0.5).into_iter().map(|x| transform.inverse(x)).collect()
    }
}

/// Re-maximise the other free parameters at each fixed value of `param`.
pub fn profile_likelihood(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    fit: &FitResult,
    param: &str,
    opts: &ProfileOptions,
) -> Result<ProfileCurve> {
    let k = fit
        .free_names
        .iter()
        .position(|n| n == param)
        .ok_or_else(|| SsmError::Config(format!("`{param}` is not a free parameter of the fit")))?;
    let spec = model.spec();
    let transform = spec.defs()[spec.index_of(param).unwrap()].transform.clone();
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_grid(fit, k, opts.points, &transform),
    };
    for v in &grid {
        if !transform.in_support(*v) {
            return Err(SsmError::domain(param, format!("profile value {v} is outside the support")));
        }
    }
    let rest0: Vec<f64> = fit.x.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
    let results: Vec<(f64, bool)> = grid
        .par_iter()
        .map(|&v| {
            let xk = transform.forward(v);
            let full = |rest: &[f64]| {
                let mut x = rest.to_vec();
                x.insert(k, xk);
                x
            };
            let f = |rest: &[f64]| match spec.from_unconstrained_with(&fit.theta, &full(rest)) {
                Ok(th) => marginal_loglik(model, data, &th, &fit.backend).map(|l| -l).unwrap_or(f64::INFINITY),
                Err(_) => f64::INFINITY,
            };
            match nelder_mead(&f, &rest0, &opts.optimizer) {
                Ok(r) => {
                    // one restart from the incumbent guards against early collapse
                    match nelder_mead(&f, &r.x, &opts.optimizer) {
                        Ok(r2) if r2.f <= r.f => (-r2.f, r2.converged),
                        _ => (-r.f, r.converged),
                    }
                }
                Err(_) => (f64::NEG_INFINITY, false),
            }
        })
        .collect();
    let loglik: Vec<f64> = results.iter().map(|r| r.0).collect();
    let converged: Vec<bool> = results.iter().map(|r| r.1).collect();
    let finite: Vec<f64> = loglik.iter().cloned().filter(|v| v.is_finite()).collect();
    let flatness = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - finite.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(ProfileCurve {
        param: param.to_string(),
        grid,
        loglik,
        converged,
        max_loglik: fit.loglik,
        flatness,
        threshold: opts.threshold,
        flat: flatness < opts.threshold,
    })
}

#[derive(Clone, Debug)]
pub struct IdentifiabilityReport {
    /// Eigenvalues of the observed information (negative log-likelihood Hessian), ascending.
    pub eigenvalues: Vec<f64>,
    pub ratio: f64,
    pub rel_tol: f64,
    pub suspect: bool,
}

/// Flag near-singular curvature: smallest eigenvalue below `rel_tol` times the largest.
pub fn hessian_identifiability(fit: &FitResult, rel_tol: f64) -> Result<IdentifiabilityReport> {
    let h = fit
        .hessian
        .as_ref()
        .ok_or_else(|| SsmError::Config("the fit carries no Hessian".into()))?;
    if h.nrows() == 0 {
        return Ok(IdentifiabilityReport { eigenvalues: vec![], ratio: 1.0, rel_tol, suspect: false });
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(-h.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let largest = *ev.last().unwrap();
    let ratio = if largest > 0.0 { ev[0] / largest } else { 0.0 };
    Ok(IdentifiabilityReport { suspect: ratio < rel_tol, eigenvalues: ev, ratio, rel_tol })
}

#[derive(Clone, Debug)]
pub struct EstimabilityRow {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// `None` with fewer than two usable replicates.
    pub sd: Option<f64>,
    pub rmse: f64,
    /// Share of Wald 95% intervals covering the truth, among replicates with SEs.
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EstimabilityReport {
    pub rows: Vec<EstimabilityRow>,
    /// Natural-scale free estimates of each usable replicate.
    pub estimates: Vec<Vec<f64>>,
    pub n_rep: usize,
    pub n_used: usize,
    pub n_failed: usize,
}

/// Simulate, refit and summarise recovery of every free parameter.
#[allow(clippy::too_many_arguments)]
pub fn simulation_estimability(
    model: &dyn StateSpaceModel,
    theta_true: &ParamVector,
    t_len: usize,
    n_rep: usize,
    backend: &Backend,
    seed: u64,
    opts: &FitOptions,
) -> Result<EstimabilityReport> {
    if n_rep == 0 {
        return Err(SsmError::Config("at least one replicate is required".into()));
    }
    let template = regular_template(t_len, model.obs_dim())?;
    let fits: Vec<Option<FitResult>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let sim = simulate(model, theta_true, &template, derive_seed(seed, &[r as u64])).ok()?;
            let fit = fit_mle(model, &sim.data, backend, Some(theta_true), opts).ok()?;
            fit.converged.then_some(fit)
        })
        .collect();
    let used: Vec<&FitResult> = fits.iter().flatten().collect();
    let n_failed = n_rep - used.len();
    if 2 * n_failed > n_rep {
        return Err(SsmError::Estimability(format!("{n_failed} of {n_rep} replicate fits failed")));
    }
    let names = model.spec().free_names();
    let estimates: Vec<Vec<f64>> = used
        .iter()
        .map(|f| names.iter().map(|n| f.theta.get(n).unwrap()).collect())
        .collect();
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let truth = theta_true.get(name).unwrap();
            let vals: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            let m = mean(&vals);
            let rmse = (vals.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            let with_se: Vec<bool> = used
                .iter()
                .filter_map(|f| f.se.as_ref().map(|se| (f.theta.get(name).unwrap() - truth).abs() <= 1.959964 * se[k]))
                .collect();
            EstimabilityRow {
                name: name.clone(),
                truth,
                mean: m,
                bias: m - truth,
                sd: sample_sd(&vals),
                rmse,
                coverage: (!with_se.is_empty())
                    .then(|| with_se.iter().filter(|b| **b).count() as f64 / with_se.len() as f64),
            }
        })
        .collect();
    Ok(EstimabilityReport { rows, estimates, n_rep, n_used: used.len(), n_failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{make_ndlm, make_product_ndlm};

    fn toy_fit(t_len: usize, seed: u64) -> (crate::zoo::Ndlm, TimeSeriesData, FitResult) {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(t_len, 1).unwrap(), seed).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        (m, sim.data, fit)
    }

    #[test]
    fn toy_profile_is_curved() {
        let (m, data, fit) = toy_fit(200, 2);
        let p = profile_likelihood(&m, &data, &fit, "sigma_p", &ProfileOptions::default()).unwrap();
        assert!(p.flatness > 2.0, "{}", p.flatness);
        assert!(!p.flat);
        for v in &p.loglik {
            assert!(*v <= fit.loglik + 1e-6);
        }
    }

    #[test]
    fn profile_at_mle_equals_max() {
        let (m, data, fit) = toy_fit(100, 4);
        let v = fit.theta.get("sigma_o").unwrap();
        let opts = ProfileOptions { grid: Some(vec![v]), ..ProfileOptions::default() };
        let p = profile_likelihood(&m, &data, &fit, "sigma_o", &opts).unwrap();
        assert!((p.loglik[0] - fit.loglik).abs() < 1e-6);
    }

    #[test]
    fn unknown_profile_parameter() {
        let (m, data, fit) = toy_fit(30, 4);
        assert!(profile_likelihood(&m, &data, &fit, "alpha", &ProfileOptions::default()).is_err());
    }

    #[test]
    fn redundant_product_is_flagged() {
        let m = make_product_ndlm(1.0, 1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(200, 1).unwrap(), 8).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        let rep = hessian_identifiability(&fit, 1e-6).unwrap();
        assert!(rep.suspect, "ratio {}", rep.ratio);
        assert!(rep.ratio < 1e-6);
        let p = profile_likelihood(&m, &sim.data, &fit, "a", &ProfileOptions::default()).unwrap();
        assert!(p.flatness < 0.1, "{}", p.flatness);
    }

    #[test]
    fn toy_hessian_is_clear() {
        let (_, _, fit) = toy_fit(200, 6);
        let rep = hessian_identifiability(&fit, 1e-6).unwrap();
        assert!(!rep.suspect);
        assert!(rep.ratio > 1e-3);
    }

    #[test]
    fn single_parameter_ratio_is_one() {
        let mut m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        m.spec_mut().fix("sigma_p", 0.1).unwrap();
        m.spec_mut().fix("z0", 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(50, 1).unwrap(), 1).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        let rep = hessian_identifiability(&fit, 1e-6).unwrap();
        assert_eq!(rep.ratio, 1.0);
        assert!(!rep.suspect);
    }

    #[test]
    fn estimability_small_run() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let r = simulation_estimability(&m, &th, 200, 8, &Backend::Kalman, 3, &FitOptions::default()).unwrap();
        assert_eq!(r.n_used + r.n_failed, 8);
        for row in r.rows.iter().filter(|r| r.name.starts_with("sigma")) {
            assert!(row.bias.abs() < 0.03, "{row:?}");
        }
        let one = simulation_estimability(&m, &th, 50, 1, &Backend::Kalman, 3, &FitOptions::default()).unwrap();
        assert!(one.rows.iter().all(|r| r.sd.is_none()));
    }
}
