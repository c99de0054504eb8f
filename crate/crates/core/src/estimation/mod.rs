//! Maximum likelihood on the transformed parameter scale, and the
//! identifiability and estimability lab.

mod ident;
mod optim;

pub use ident::{
    hessian_identifiability, profile_likelihood, simulation_estimability, EstimabilityReport, EstimabilityRow,
    IdentifiabilityReport, ProfileCurve, ProfileOptions,
};
pub use optim::{fd_hessian, fd_step, nelder_mead, NelderMeadOptions, OptimResult};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesData;
use crate::discretized::{grid_filter, hmm_forward, StateGrid};
use crate::error::{Result, SsmError};
use crate::kalman::kalman_filter;
use crate::laplace::laplace_marginal_loglik;
use crate::model::StateSpaceModel;
use crate::params::ParamVector;
use crate::smc::{bootstrap_filter, ParticleOptions};

/// How the marginal likelihood is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Kalman,
    Laplace,
    Grid {
        cells: usize,
        /// Fixed bounds; chosen from the model at the starting point when absent.
        bounds: Option<(f64, f64)>,
    },
    /// Bootstrap filter with a fixed seed, so the surface is deterministic in θ.
    Particle { particles: usize, seed: u64 },
    Hmm,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Kalman => "kalman",
            Backend::Laplace => "laplace",
            Backend::Grid { .. } => "grid",
            Backend::Particle { .. } => "particle",
            Backend::Hmm => "hmm",
        }
    }

    pub fn grid(cells: usize) -> Self {
        Backend::Grid { cells, bounds: None }
    }

    /// Exact method when available, otherwise the grid for scalar states and Laplace beyond.
    pub fn auto(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Self {
        if model.discrete_states().is_some() {
            Backend::Hmm
        } else if model.linear_gaussian(data, 0, theta).is_some() {
            Backend::Kalman
        } else if model.state_dim() == 1 {
            Backend::grid(400)
        } else {
            Backend::Laplace
        }
    }

    /// Configuration error when the backend cannot handle the model.
    pub fn check(&self, model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        let discrete = model.discrete_states().is_some();
        let ok = match self {
            Backend::Kalman => model.linear_gaussian(data, 0, theta).is_some(),
            Backend::Laplace => !discrete,
            Backend::Grid { cells, .. } => model.state_dim() == 1 && !discrete && *cells >= 2,
            Backend::Particle { particles, .. } => *particles >= 1,
            Backend::Hmm => discrete,
        };
        if ok {
            Ok(())
        } else {
            let why = match self {
                Backend::Kalman => "the model has no linear-Gaussian form",
                Backend::Laplace => "Laplace needs continuous states",
                Backend::Grid { .. } => "the grid needs a continuous scalar state and at least 2 cells",
                Backend::Particle { .. } => "the particle count must be positive",
                Backend::Hmm => "the HMM recursion needs a finite state space",
            };
            Err(SsmError::Config(format!("backend `{}` cannot fit model `{}`: {why}", self.name(), model.name())))
        }
    }

    /// Copy with grid bounds resolved at `theta`.
    pub fn resolved(&self, model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<Self> {
        Ok(match self {
            Backend::Grid { cells, bounds: None } => {
                let g = StateGrid::auto(model, data, theta, *cells)?;
                Backend::Grid { cells: *cells, bounds: Some((g.lower, g.upper)) }
            }
            other => other.clone(),
        })
    }
}

/// Marginal log-likelihood of `theta` under `backend`.
pub fn marginal_loglik(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<f64> {
    match backend {
        Backend::Kalman => Ok(kalman_filter(model, data, theta)?.loglik),
        Backend::Laplace => laplace_marginal_loglik(model, data, theta),
        Backend::Grid { cells, bounds } => {
            let grid = match bounds {
                Some((lo, hi)) => StateGrid::new(*lo, *hi, *cells)?,
                None => StateGrid::auto(model, data, theta, *cells)?,
            };
            Ok(grid_filter(model, data, theta, &grid)?.loglik)
        }
        Backend::Particle { particles, seed } => {
            Ok(bootstrap_filter(model, data, theta, &ParticleOptions::new(*particles), *seed)?.loglik)
        }
        Backend::Hmm => Ok(hmm_forward(model, data, theta)?.loglik),
    }
}

/// One-step predictive log-density terms `log p(y_t | y_{1:t-1}, θ)`.
pub fn loglik_terms(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<Vec<f64>> {
    match backend {
        Backend::Kalman => Ok(kalman_filter(model, data, theta)?.loglik_terms),
        Backend::Grid { cells, bounds } => {
            let grid = match bounds {
                Some((lo, hi)) => StateGrid::new(*lo, *hi, *cells)?,
                None => StateGrid::auto(model, data, theta, *cells)?,
            };
            Ok(grid_filter(model, data, theta, &grid)?.loglik_terms)
        }
        Backend::Hmm => {
            let f = hmm_forward(model, data, theta)?;
            Ok(f.scales.iter().map(|c| c.ln()).collect())
        }
        Backend::Particle { particles, seed } => {
            Ok(bootstrap_filter(model, data, theta, &ParticleOptions::new(*particles), *seed)?.loglik_terms)
        }
        Backend::Laplace => Err(SsmError::Unsupported(
            "the Laplace backend gives no one-step predictive decomposition".into(),
        )),
    }
}

/// Eigenvalue ratio of the observed information below which it is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub optimizer: NelderMeadOptions,
    /// Fresh-simplex restarts from the incumbent after the first run.
    pub restarts: usize,
    pub hessian: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optimizer: NelderMeadOptions::default(), restarts: 2, hessian: true }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: String,
    pub backend: Backend,
    pub theta: ParamVector,
    pub free_names: Vec<String>,
    /// Free parameters on the transformed scale.
    pub x: Vec<f64>,
    pub loglik: f64,
    /// Hessian of the log-likelihood in `x`.
    pub hessian: Option<DMatrix<f64>>,
    /// Standard errors of the free parameters on the natural scale.
    pub se: Option<Vec<f64>>,
    pub se_transformed: Option<Vec<f64>>,
    /// Best log-likelihood after each optimizer iteration.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub converged: bool,
    pub evaluations: usize,
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.x.len()
    }
}

/// Negative log-likelihood on the transformed scale; failures are +∞.
pub(crate) fn objective<'a>(
    model: &'a dyn StateSpaceModel,
    data: &'a TimeSeriesData,
    base: &'a ParamVector,
    backend: &'a Backend,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| match model.spec().from_unconstrained_with(base, x) {
        Ok(th) => match marginal_loglik(model, data, &th, backend) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    }
}

/// Standard errors from the log-likelihood Hessian, if the observed information
/// is positive definite and not numerically singular.
pub(crate) fn standard_errors(model: &dyn StateSpaceModel, x: &[f64], hessian: &DMatrix<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let info = -hessian.clone();
    let ev = nalgebra::SymmetricEigen::new(info.clone()).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo > SINGULAR_RATIO * hi) {
        return None;
    }
    let cov = info.cholesky()?.inverse();
    let se_x: Vec<f64> = (0..x.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let deriv = model.spec().derivatives(x);
    let se = se_x.iter().zip(&deriv).map(|(s, d)| s * d.abs()).collect();
    Some((se, se_x))
}

/// Maximise the marginal likelihood over the free parameters.
pub fn fit_mle(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    backend: &Backend,
    theta_init: Option<&ParamVector>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let init = theta_init.cloned().unwrap_or_else(|| model.spec().nominal());
    model.check(data, &init)?;
    backend.check(model, data, &init)?;
    let x0 = model.spec().to_unconstrained(&init)?;
    let mut warnings = Vec::new();
    let mut backend_used = backend.resolved(model, data, &init)?;
    let rounds = if matches!(backend, Backend::Grid { bounds: None, .. }) { 2 } else { 1 };
    let mut x = x0;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut converged = false;
    let mut best_f = f64::INFINITY;
    for round in 0..rounds {
        if round > 0 {
            let th = model.spec().from_unconstrained_with(&init, &x)?;
            backend_used = backend.resolved(model, data, &th)?;
            best_f = f64::INFINITY;
        }
        let f = objective(model, data, &init, &backend_used);
        for attempt in 0..=opts.restarts {
            let r = nelder_mead(&f, &x, &opts.optimizer)?;
            evaluations += r.evaluations;
            trace.extend(r.trace.iter().map(|(p, v)| (p.clone(), -v)));
            let gain = best_f - r.f;
            x = r.x;
            converged = r.converged;
            best_f = best_f.min(r.f);
            if attempt > 0 && gain.abs() <= 1e-9 * (1.0 + best_f.abs()) {
                break;
            }
        }
    }
    if !converged {
        warnings.push("optimizer stopped at the iteration limit".into());
    }
    let theta = model.spec().from_unconstrained_with(&init, &x)?;
    let loglik = marginal_loglik(model, data, &theta, &backend_used)?;
    let (mut hessian, mut se, mut se_transformed) = (None, None, None);
    if opts.hessian && !x.is_empty() {
        let f = objective(model, data, &init, &backend_used);
        match fd_hessian(&|v: &[f64]| -f(v), &x, None) {
            Ok(h) => {
                if let Some((s, sx)) = standard_errors(model, &x, &h) {
                    se = Some(s);
                    se_transformed = Some(sx);
                } else {
                    warnings.push("observed information is not positive definite or is near-singular; standard errors omitted".into());
                }
                hessian = Some(h);
            }
            Err(e) => warnings.push(format!("Hessian failed: {e}")),
        }
    }
    if matches!(backend_used, Backend::Particle { .. }) {
        warnings.push("particle likelihood surface is stochastic; the optimum is conditional on the filter seed".into());
    }
    Ok(FitResult {
        model: model.name().to_string(),
        backend: backend_used,
        theta,
        free_names: model.spec().free_names(),
        x,
        loglik,
        hessian,
        se,
        se_transformed,
        trace,
        converged,
        evaluations,
        n_obs: data.n_observed(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regular_template, simulate};
    use crate::zoo::{make_gompertz, make_ndlm, GompertzForm};

    #[test]
    fn toy_recovery_within_three_se() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(200, 1).unwrap(), 11).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let se = fit.se.clone().unwrap();
        for (k, name) in ["sigma_p", "sigma_o"].iter().enumerate() {
            let v = fit.theta.get(name).unwrap();
            assert!((v - 0.1).abs() < 3.0 * se[k], "{name} {v} se {}", se[k]);
        }
    }

    #[test]
    fn starting_at_truth_never_loses() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(80, 1).unwrap(), 3).unwrap();
        let at_truth = marginal_loglik(&m, &sim.data, &th, &Backend::Kalman).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, Some(&th), &FitOptions::default()).unwrap();
        assert!(fit.loglik >= at_truth);
        assert!(fit.trace.iter().all(|(_, v)| *v <= fit.loglik + 1e-12));
    }

    #[test]
    fn local_maximum_check() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(100, 1).unwrap(), 5).unwrap();
        let fit = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap();
        for i in 0..fit.x.len() {
            for s in [-1e-3, 1e-3] {
                let mut x = fit.x.clone();
                x[i] += s;
                let th2 = m.spec().from_unconstrained_with(&fit.theta, &x).unwrap();
                let v = marginal_loglik(&m, &sim.data, &th2, &Backend::Kalman).unwrap();
                assert!(v <= fit.loglik + 1e-6);
            }
        }
    }

    #[test]
    fn gompertz_kalman_and_grid_agree() {
        let m = make_gompertz(0.5, -0.3, 0.1, 0.1, 1.6, GompertzForm::Linearized, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(60, 1).unwrap(), 21).unwrap();
        let opts = FitOptions { hessian: false, ..FitOptions::default() };
        let a = fit_mle(&m, &sim.data, &Backend::Kalman, None, &opts).unwrap();
        let b = fit_mle(&m, &sim.data, &Backend::grid(400), None, &opts).unwrap();
        for (x, y) in a.theta.values().iter().zip(b.theta.values()) {
            assert!((x - y).abs() < 1e-3, "{:?} vs {:?}", a.theta.values(), b.theta.values());
        }
    }

    #[test]
    fn incompatible_backend_is_config_error() {
        let m = make_gompertz(0.5, -0.3, 0.1, 0.1, 1.6, GompertzForm::Raw, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(10, 1).unwrap(), 1).unwrap();
        let e = fit_mle(&m, &sim.data, &Backend::Kalman, None, &FitOptions::default()).unwrap_err();
        assert!(matches!(e, SsmError::Config(_)));
        assert!(matches!(fit_mle(&m, &sim.data, &Backend::Hmm, None, &FitOptions::default()), Err(SsmError::Config(_))));
    }
}
