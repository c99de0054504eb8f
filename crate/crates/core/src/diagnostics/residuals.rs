//! Response, one-step-ahead, PIT and quantile residuals.

use serde::Serialize;

use super::tests::{acf_dropping_missing, ks_test, KsResult, Reference};
use crate::data::TimeSeriesData;
use crate::discretized::{grid_filter, grid_smooth, GridFilterResult, StateGrid};
use crate::error::{Result, SsmError};
use crate::estimation::Backend;
use crate::kalman::{kalman_filter, kalman_smoother};
use crate::model::StateSpaceModel;
use crate::params::ParamVector;
use crate::smc::{bootstrap_filter, ParticleOptions};
use crate::stats::{mean, normal_cdf, sample_sd, std_normal_quantile};

/// Default ACF depth in residual summaries.
pub const SUMMARY_LAGS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Response,
    OneStepAhead,
    Standardized,
    Pit,
    Quantile,
}

impl ResidualKind {
    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::Response => "response",
            ResidualKind::OneStepAhead => "one_step_ahead",
            ResidualKind::Standardized => "standardized",
            ResidualKind::Pit => "pit",
            ResidualKind::Quantile => "quantile",
        }
    }

    fn reference(&self) -> Option<Reference> {
        match self {
            ResidualKind::Standardized | ResidualKind::Quantile => Some(Reference::StdNormal),
            ResidualKind::Pit => Some(Reference::Uniform),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSummary {
    pub coord: usize,
    pub n: usize,
    pub n_missing: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    pub acf: Vec<f64>,
    /// Against N(0,1) for standardized and quantile residuals, U(0,1) for PIT.
    pub ks: Option<KsResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSeries {
    pub kind: ResidualKind,
    /// `[t][coord]`, missing where the observation is.
    pub values: Vec<Vec<Option<f64>>>,
    pub summaries: Vec<ResidualSummary>,
    pub warnings: Vec<String>,
}

impl ResidualSeries {
    pub fn new(kind: ResidualKind, values: Vec<Vec<Option<f64>>>, warnings: Vec<String>) -> Self {
        let dim = values.first().map_or(0, |r| r.len());
        let summaries = (0..dim)
            .map(|c| {
                let col: Vec<Option<f64>> = values.iter().map(|r| r[c]).collect();
                let obs: Vec<f64> = col.iter().flatten().cloned().collect();
                let lags = SUMMARY_LAGS.min(obs.len().saturating_sub(2));
                ResidualSummary {
                    coord: c,
                    n: obs.len(),
                    n_missing: col.len() - obs.len(),
                    mean: if obs.is_empty() { f64::NAN } else { mean(&obs) },
                    sd: sample_sd(&obs),
                    acf: if obs.len() >= 2 { acf_dropping_missing(&col, lags).map(|a| a.0).unwrap_or_default() } else { vec![] },
                    ks: kind.reference().and_then(|r| ks_test(&obs, r).ok()),
                }
            })
            .collect();
        Self { kind, values, summaries, warnings }
    }

    pub fn column(&self, coord: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|r| r[coord]).collect()
    }

    /// Non-missing values of one coordinate, in time order.
    pub fn observed(&self, coord: usize) -> Vec<f64> {
        self.values.iter().filter_map(|r| r[coord]).collect()
    }
}

/// One-step predictive mean, variance and CDF at the observed value, `[t][coord]`.
#[derive(Clone, Debug)]
pub struct Predictive {
    pub mean: Vec<Vec<Option<f64>>>,
    pub var: Vec<Vec<Option<f64>>>,
    pub pit: Vec<Vec<Option<f64>>>,
}

pub(crate) fn require_aligned(model: &dyn StateSpaceModel, data: &TimeSeriesData) -> Result<()> {
    if model.num_steps(data) != data.len() {
        return Err(SsmError::Unsupported(format!(
            "residuals need one model step per data record; model `{}` uses a different step layout",
            model.name()
        )));
    }
    Ok(())
}

pub(crate) fn grid_for(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, cells: usize, bounds: Option<(f64, f64)>) -> Result<StateGrid> {
    match bounds {
        Some((lo, hi)) => StateGrid::new(lo, hi, cells),
        None => StateGrid::auto(model, data, theta, cells),
    }
}

fn grid_run(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, cells: usize, bounds: Option<(f64, f64)>) -> Result<GridFilterResult> {
    grid_filter(model, data, theta, &grid_for(model, data, theta, cells, bounds)?)
}

fn unsupported(backend: &Backend) -> SsmError {
    SsmError::Unsupported(format!("the {} backend provides no predictive distribution for residuals", backend.name()))
}

pub fn one_step_predictive(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<Predictive> {
    require_aligned(model, data)?;
    let n = data.len();
    let dim = data.obs_dim();
    let mut out = Predictive { mean: vec![vec![None; dim]; n], var: vec![vec![None; dim]; n], pit: vec![vec![None; dim]; n] };
    match backend {
        Backend::Kalman => {
            let f = kalman_filter(model, data, theta)?;
            for t in 0..n {
                for (c, y) in data.record(t).iter().enumerate() {
                    let m = f.obs_mean[t][c];
                    let v = f.obs_cov[t][(c, c)];
                    out.mean[t][c] = Some(m);
                    out.var[t][c] = Some(v);
                    out.pit[t][c] = y.map(|y| normal_cdf(y, m, v.max(0.0).sqrt()));
                }
            }
        }
        Backend::Grid { cells, bounds } => {
            let g = grid_run(model, data, theta, *cells, *bounds)?;
            for t in 0..n {
                for (c, y) in data.record(t).iter().enumerate() {
                    if let Some((m, v)) = g.predictive_moments(model, data, theta, t, c) {
                        out.mean[t][c] = Some(m);
                        out.var[t][c] = Some(v);
                    }
                    if let Some(y) = y {
                        out.pit[t][c] = g.predictive_cdf(model, data, theta, t, c, *y);
                    }
                }
            }
        }
        Backend::Particle { particles, seed } => {
            let opts = ParticleOptions { particles: *particles, predictive: true, ..ParticleOptions::default() };
            let r = bootstrap_filter(model, data, theta, &opts, *seed)?;
            for (t, s) in r.predictive.unwrap_or_default().into_iter().enumerate() {
                out.mean[t] = s.mean;
                out.var[t] = s.var;
                out.pit[t] = s.pit;
            }
        }
        b => return Err(unsupported(b)),
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct OsaResiduals {
    pub raw: ResidualSeries,
    pub standardized: ResidualSeries,
}

/// `y_t − ŷ_{t|1:t−1}` and its standardized form.
pub fn osa_residuals(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<OsaResiduals> {
    let p = one_step_predictive(model, data, theta, backend)?;
    let n = data.len();
    let dim = data.obs_dim();
    let mut raw = vec![vec![None; dim]; n];
    let mut std = vec![vec![None; dim]; n];
    for t in 0..n {
        for (c, y) in data.record(t).iter().enumerate() {
            let Some(y) = y else { continue };
            let (Some(m), Some(v)) = (p.mean[t][c], p.var[t][c]) else {
                return Err(SsmError::Unsupported(format!("model `{}` gives no observation moments", model.name())));
            };
            if !(v > 0.0) {
                return Err(SsmError::numerical(t, "degenerate prediction: zero predictive variance"));
            }
            raw[t][c] = Some(y - m);
            std[t][c] = Some((y - m) / v.sqrt());
        }
    }
    Ok(OsaResiduals {
        raw: ResidualSeries::new(ResidualKind::OneStepAhead, raw, vec![]),
        standardized: ResidualSeries::new(ResidualKind::Standardized, std, vec![]),
    })
}

/// `u_t = F_t(y_t)` under the one-step predictive distribution.
pub fn pit_scores(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<ResidualSeries> {
    let p = one_step_predictive(model, data, theta, backend)?;
    for t in 0..data.len() {
        for (c, y) in data.record(t).iter().enumerate() {
            if y.is_some() && p.pit[t][c].is_none() {
                return Err(SsmError::Unsupported(format!("model `{}` gives no observation CDF", model.name())));
            }
        }
    }
    let vals = p.pit.into_iter().map(|r| r.into_iter().map(|u| u.map(|u| u.clamp(0.0, 1.0))).collect()).collect();
    Ok(ResidualSeries::new(ResidualKind::Pit, vals, vec![]))
}

const PIT_CLAMP: f64 = 1e-12;

/// `v_t = Φ⁻¹(u_t)`; PIT values of exactly 0 or 1 are clamped with a warning.
pub fn quantile_residuals(pit: &ResidualSeries) -> ResidualSeries {
    let mut clamped = 0usize;
    let vals = pit
        .values
        .iter()
        .map(|r| {
            r.iter()
                .map(|u| {
                    u.map(|u| {
                        if u <= 0.0 || u >= 1.0 {
                            clamped += 1;
                        }
                        std_normal_quantile(u.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP))
                    })
                })
                .collect()
        })
        .collect();
    let warnings = if clamped > 0 { vec![format!("{clamped} PIT values at 0 or 1 clamped by {PIT_CLAMP:e}")] } else { vec![] };
    ResidualSeries::new(ResidualKind::Quantile, vals, warnings)
}

/// `E[y_t | y_{1:T}]` per step and coordinate from a smoother.
pub fn smoothed_observation_means(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<Vec<Vec<f64>>> {
    require_aligned(model, data)?;
    let no_moments = || SsmError::Unsupported(format!("model `{}` gives no observation moments", model.name()));
    match backend {
        Backend::Kalman => {
            let s = kalman_smoother(&kalman_filter(model, data, theta)?)?;
            (0..data.len())
                .map(|t| {
                    // exact for linear observation equations
                    let z: Vec<f64> = s[t + 1].mean.iter().cloned().collect();
                    model.observation_moments(data, t, &z, theta).map(|m| m.0).ok_or_else(no_moments)
                })
                .collect()
        }
        Backend::Grid { cells, bounds } => {
            let g = grid_run(model, data, theta, *cells, *bounds)?;
            let sm = grid_smooth(model, data, theta, &g);
            (0..data.len())
                .map(|t| {
                    let mut acc = vec![0.0; data.obs_dim()];
                    for (zc, w) in g.grid.centers.iter().zip(&sm[t]) {
                        if *w > 0.0 {
                            let (m, _) = model.observation_moments(data, t, &[*zc], theta).ok_or_else(no_moments)?;
                            acc.iter_mut().zip(m).for_each(|(a, v)| *a += w * v);
                        }
                    }
                    Ok(acc)
                })
                .collect()
        }
        b => Err(SsmError::Unsupported(format!("the {} backend has no smoother", b.name()))),
    }
}

/// `y_t − ŷ_{t|1:T}`. These are serially dependent even under the true model.
pub fn response_residuals(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, backend: &Backend) -> Result<ResidualSeries> {
    let fitted = smoothed_observation_means(model, data, theta, backend)?;
    Ok(response_from_fitted(data, &fitted))
}

/// Response residuals with fitted values from a given trajectory (`z_0..z_T` or `z_1..z_T`).
pub fn response_residuals_from_states(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, states: &[Vec<f64>]) -> Result<ResidualSeries> {
    require_aligned(model, data)?;
    let z = match states.len() {
        l if l == data.len() + 1 => &states[1..],
        l if l == data.len() => states,
        l => return Err(SsmError::Config(format!("trajectory has {l} states for {} records", data.len()))),
    };
    let fitted = (0..data.len())
        .map(|t| {
            model
                .observation_moments(data, t, &z[t], theta)
                .map(|m| m.0)
                .ok_or_else(|| SsmError::Unsupported(format!("model `{}` gives no observation moments", model.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(response_from_fitted(data, &fitted))
}

fn response_from_fitted(data: &TimeSeriesData, fitted: &[Vec<f64>]) -> ResidualSeries {
    let vals = (0..data.len())
        .map(|t| data.record(t).iter().zip(&fitted[t]).map(|(y, f)| y.map(|y| y - f)).collect())
        .collect();
    ResidualSeries::new(ResidualKind::Response, vals, vec![])
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::model::{regular_template, simulate};
    use crate::zoo::{make_gompertz, make_ndlm, GompertzForm};

    fn toy(t_len: usize, seed: u64) -> (crate::zoo::Ndlm, TimeSeriesData, ParamVector) {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(t_len, 1).unwrap(), seed).unwrap();
        (m, sim.data, th)
    }

    #[test]
    fn quantile_equals_standardized_for_kalman() {
        let (m, d, th) = toy(80, 1);
        let osa = osa_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
        let q = quantile_residuals(&pit_scores(&m, &d, &th, &Backend::Kalman).unwrap());
        for (a, b) in osa.standardized.observed(0).iter().zip(q.observed(0)) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn first_step_uses_prior_predictive() {
        let m = make_ndlm(1.0, 1.0, 0.3, 0.4, 2.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(3.0), Some(2.5)]).unwrap();
        let osa = osa_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
        let want = (3.0 - 2.0) / (0.09f64 + 0.16).sqrt();
        assert!((osa.standardized.values[0][0].unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn pit_symmetry_and_limits() {
        let m = make_ndlm(1.0, 1.0, 0.6, 0.8, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.0)]).unwrap();
        assert!((pit_scores(&m, &d, &th, &Backend::Kalman).unwrap().values[0][0].unwrap() - 0.5).abs() < 1e-15);
        let d = TimeSeriesData::from_options(&[Some(-1e6)]).unwrap();
        let p = pit_scores(&m, &d, &th, &Backend::Kalman).unwrap();
        assert!(p.values[0][0].unwrap() < 1e-300);
        let q = quantile_residuals(&p);
        assert!(q.values[0][0].unwrap().is_finite());
        assert_eq!(q.warnings.len(), 1);
    }

    #[test]
    fn quantile_round_trip() {
        let u = crate::stats::std_normal_cdf(1.96);
        let s = ResidualSeries::new(ResidualKind::Pit, vec![vec![Some(0.5)], vec![Some(u)]], vec![]);
        let q = quantile_residuals(&s);
        assert_eq!(q.values[0][0], Some(0.0));
        assert!((q.values[1][0].unwrap() - 1.96).abs() < 1e-9);
    }

    #[test]
    fn grid_and_particle_agree_with_kalman() {
        let (m, d, th) = toy(40, 3);
        let k = osa_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
        let g = osa_residuals(&m, &d, &th, &Backend::Grid { cells: 400, bounds: None }).unwrap();
        for (a, b) in k.standardized.observed(0).iter().zip(g.standardized.observed(0)) {
            assert!((a - b).abs() < 1e-3);
        }
        let p = pit_scores(&m, &d, &th, &Backend::Particle { particles: 4000, seed: 2 }).unwrap();
        let kp = pit_scores(&m, &d, &th, &Backend::Kalman).unwrap();
        let worst = p.observed(0).iter().zip(kp.observed(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn noise_free_observation_gives_zero_response_residuals() {
        let m = make_ndlm(1.0, 1.0, 0.2, 0.0, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(30, 1).unwrap(), 4).unwrap();
        let r = response_residuals(&m, &sim.data, &th, &Backend::Kalman).unwrap();
        assert!(r.observed(0).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn missing_observation_gives_missing_residual() {
        let (m, d, th) = toy(20, 5);
        let d = d.masked([4, 9]);
        let r = response_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
        assert!(r.values[4][0].is_none() && r.values[9][0].is_none());
        assert_eq!(r.summaries[0].n_missing, 2);
        let o = osa_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
        assert!(o.raw.values[4][0].is_none());
    }

    #[test]
    fn response_residuals_more_autocorrelated_than_osa() {
        let mut gap = 0.0;
        for s in 0..50 {
            let (m, d, th) = toy(100, 100 + s);
            let r = response_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
            let o = osa_residuals(&m, &d, &th, &Backend::Kalman).unwrap();
            // smoothed residuals of a local level model are negatively correlated
            gap += r.summaries[0].acf[1].abs() - o.standardized.summaries[0].acf[1].abs();
        }
        assert!(gap / 50.0 > 0.1, "{}", gap / 50.0);
    }

    #[test]
    fn pit_in_unit_interval_for_gompertz_grid() {
        let m = make_gompertz(0.5, -0.3, 0.2, 0.15, 1.2, GompertzForm::Linearized, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(30, 1).unwrap(), 3).unwrap();
        let p = pit_scores(&m, &sim.data, &th, &Backend::grid(300)).unwrap();
        assert!(p.observed(0).iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn unsupported_backends_are_named() {
        let (m, d, th) = toy(10, 1);
        assert!(matches!(pit_scores(&m, &d, &th, &Backend::Laplace), Err(SsmError::Unsupported(_))));
    }
}
