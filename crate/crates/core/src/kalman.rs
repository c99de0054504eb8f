//! Kalman filter, RTS smoother, forecasting and forward-filtering
//! backward-sampling for linear-Gaussian models.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{robust_cholesky, InitialState, LinearGaussianStep, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::derive_rng;
use crate::stats::LN_2PI;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }
}

#[derive(Clone, Debug)]
pub struct FilterResult {
    /// Belief about `z_0`.
    pub initial: GaussianBelief,
    /// `z_{t|1:t-1}` per step.
    pub predicted: Vec<GaussianBelief>,
    /// `z_{t|1:t}` per step.
    pub filtered: Vec<GaussianBelief>,
    /// One-step predictive mean and covariance of the full observation vector.
    pub obs_mean: Vec<DVector<f64>>,
    pub obs_cov: Vec<DMatrix<f64>>,
    /// Log-likelihood contribution per step (0 when nothing is observed).
    pub loglik_terms: Vec<f64>,
    pub loglik: f64,
    transitions: Vec<LinearGaussianStep>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetrize and clamp tiny negative eigenvalues; larger ones are an error.
fn condition(m: &mut DMatrix<f64>, step: usize) -> Result<()> {
    symmetrize(m);
    let n = m.nrows();
    if n == 1 {
        if m[(0, 0)] < -1e-10 {
            return Err(SsmError::numerical(step, format!("negative state variance {}", m[(0, 0)])));
        }
        m[(0, 0)] = m[(0, 0)].max(0.0);
        return Ok(());
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(SsmError::numerical(step, format!("state covariance has eigenvalue {min}")));
    }
    if min < 0.0 {
        let vals = eig.eigenvalues.map(|v| v.max(0.0));
        *m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        symmetrize(m);
    }
    Ok(())
}

pub(crate) fn require_lg(model: &dyn StateSpaceModel, data: &TimeSeriesData, t: usize, theta: &ParamVector) -> Result<LinearGaussianStep> {
    model.linear_gaussian(data, t, theta).ok_or_else(|| {
        SsmError::Config(format!("model `{}` has no linear-Gaussian form; choose another backend", model.name()))
    })
}

pub(crate) fn initial_belief(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<GaussianBelief> {
    let d = model.state_dim();
    match model.initial_state(data, theta) {
        InitialState::Fixed(z) => Ok(GaussianBelief { mean: DVector::from_vec(z), cov: DMatrix::zeros(d, d) }),
        InitialState::Gaussian { mean, cov } => Ok(GaussianBelief { mean, cov }),
        InitialState::Discrete(_) => Err(SsmError::Config("discrete-state models cannot use the Kalman filter".into())),
    }
}

fn observed_rows(data: &TimeSeriesData, t: usize) -> Vec<usize> {
    data.record(t)
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect()
}

pub fn kalman_filter(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<FilterResult> {
    model.check(data, theta)?;
    let n = model.num_steps(data);
    let initial = initial_belief(model, data, theta)?;
    let mut m = initial.mean.clone();
    let mut p = initial.cov.clone();
    let mut out = FilterResult {
        initial,
        predicted: Vec::with_capacity(n),
        filtered: Vec::with_capacity(n),
        obs_mean: Vec::with_capacity(n),
        obs_cov: Vec::with_capacity(n),
        loglik_terms: Vec::with_capacity(n),
        loglik: 0.0,
        transitions: Vec::with_capacity(n),
    };
    for t in 0..n {
        let lg = require_lg(model, data, t, theta)?;
        let mp = &lg.transition * &m + &lg.offset;
        let mut pp = &lg.transition * &p * lg.transition.transpose() + &lg.state_cov;
        condition(&mut pp, t)?;
        let ym = &lg.obs_matrix * &mp + &lg.obs_offset;
        let mut yc = &lg.obs_matrix * &pp * lg.obs_matrix.transpose() + &lg.obs_cov;
        symmetrize(&mut yc);

        let rows = observed_rows(data, t);
        let (mf, pf, ll) = if rows.is_empty() {
            (mp.clone(), pp.clone(), 0.0)
        } else {
            let k = rows.len();
            let h = lg.obs_matrix.select_rows(&rows);
            let r = lg.obs_cov.select_rows(&rows).select_columns(&rows);
            let y = DVector::from_iterator(k, rows.iter().map(|&i| data.record(t)[i].unwrap()));
            let v = y - ym.select_rows(&rows);
            let s = yc.select_rows(&rows).select_columns(&rows);
            let chol = s
                .clone()
                .cholesky()
                .ok_or_else(|| SsmError::numerical(t, "innovation covariance is singular"))?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            let sinv_v = chol.solve(&v);
            let ll = -0.5 * (k as f64 * LN_2PI + logdet + v.dot(&sinv_v));
            let gain = &pp * h.transpose() * chol.inverse();
            let mf = &mp + &gain * v;
            let ikh = DMatrix::identity(model.state_dim(), model.state_dim()) - &gain * &h;
            let mut pf = &ikh * &pp * ikh.transpose() + &gain * r * gain.transpose();
            condition(&mut pf, t)?;
            (mf, pf, ll)
        };
        if !ll.is_finite() {
            return Err(SsmError::numerical(t, "non-finite log-likelihood contribution"));
        }
        out.predicted.push(GaussianBelief { mean: mp, cov: pp });
        out.obs_mean.push(ym);
        out.obs_cov.push(yc);
        out.filtered.push(GaussianBelief { mean: mf.clone(), cov: pf.clone() });
        out.loglik_terms.push(ll);
        out.loglik += ll;
        out.transitions.push(lg);
        m = mf;
        p = pf;
    }
    Ok(out)
}

fn smoother_gain(filtered: &DMatrix<f64>, transition: &DMatrix<f64>, predicted: &DMatrix<f64>) -> DMatrix<f64> {
    let pinv = match predicted.clone().cholesky() {
        Some(c) => c.inverse(),
        None => predicted.clone().pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(predicted.nrows(), predicted.ncols())),
    };
    filtered * transition.transpose() * pinv
}

/// Smoothed beliefs for `z_0..z_T` (index 0 is the initial state).
pub fn kalman_smoother(filter: &FilterResult) -> Result<Vec<GaussianBelief>> {
    let n = filter.filtered.len();
    let mut out = vec![filter.initial.clone(); n + 1];
    if n == 0 {
        return Ok(out);
    }
    out[n] = filter.filtered[n - 1].clone();
    for k in (0..n).rev() {
        // smooth z_k (k = 0 is the initial state) from z_{k+1}
        let (mf, pf) = if k == 0 {
            (&filter.initial.mean, &filter.initial.cov)
        } else {
            (&filter.filtered[k - 1].mean, &filter.filtered[k - 1].cov)
        };
        let pred = &filter.predicted[k];
        let j = smoother_gain(pf, &filter.transitions[k].transition, &pred.cov);
        let next = &out[k + 1];
        let mean = mf + &j * (&next.mean - &pred.mean);
        let mut cov = pf + &j * (&next.cov - &pred.cov) * j.transpose();
        condition(&mut cov, k)?;
        out[k] = GaussianBelief { mean, cov };
    }
    Ok(out)
}

/// Predictive beliefs for `z_{T+1}, ..., z_{T+k}`, reusing the last step's coefficients.
pub fn forecast(filter: &FilterResult, k: usize) -> Result<Vec<GaussianBelief>> {
    if k == 0 {
        return Err(SsmError::Config("forecast horizon must be at least 1".into()));
    }
    let last = filter
        .transitions
        .last()
        .ok_or_else(|| SsmError::Data("cannot forecast from an empty series".into()))?;
    let mut b = filter.filtered.last().unwrap().clone();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mean = &last.transition * &b.mean + &last.offset;
        let mut cov = &last.transition * &b.cov * last.transition.transpose() + &last.state_cov;
        condition(&mut cov, filter.filtered.len() + j)?;
        b = GaussianBelief { mean, cov };
        out.push(b.clone());
    }
    Ok(out)
}

fn draw(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut impl rand::Rng) -> DVector<f64> {
    let l = robust_cholesky(cov);
    let e = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
    mean + l * e
}

/// One draw of `z_0..z_T` from the smoothing distribution.
pub fn ffbs_sample(filter: &FilterResult, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = derive_rng(seed, &[0xFFB5]);
    ffbs_with(filter, &mut rng)
}

pub(crate) fn ffbs_with(filter: &FilterResult, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    let n = filter.filtered.len();
    let mut out = vec![DVector::zeros(filter.initial.mean.len()); n + 1];
    out[n] = if n == 0 {
        draw(&filter.initial.mean, &filter.initial.cov, rng)
    } else {
        draw(&filter.filtered[n - 1].mean, &filter.filtered[n - 1].cov, rng)
    };
    for k in (0..n).rev() {
        let (mf, pf) = if k == 0 {
            (&filter.initial.mean, &filter.initial.cov)
        } else {
            (&filter.filtered[k - 1].mean, &filter.filtered[k - 1].cov)
        };
        let pred = &filter.predicted[k];
        let j = smoother_gain(pf, &filter.transitions[k].transition, &pred.cov);
        let mean = mf + &j * (&out[k + 1] - &pred.mean);
        let mut cov = pf - &j * &pred.cov * j.transpose();
        symmetrize(&mut cov);
        out[k] = draw(&mean, &cov, rng);
    }
    out.into_iter().map(|v| v.iter().cloned().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regular_template, simulate};
    use crate::zoo::make_ndlm;
    use approx::assert_relative_eq;

    #[test]
    fn one_step_hand_example() {
        let m = make_ndlm(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(2.0)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        assert_relative_eq!(f.predicted[0].mean[0], 0.0);
        assert_relative_eq!(f.predicted[0].cov[(0, 0)], 1.0);
        assert_relative_eq!(f.obs_cov[0][(0, 0)], 2.0);
        assert_relative_eq!(f.filtered[0].mean[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.filtered[0].cov[(0, 0)], 0.5, epsilon = 1e-14);
        let want = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - 1.0;
        assert_relative_eq!(f.loglik, want, epsilon = 1e-12);
        assert!((f.loglik + 2.265512).abs() < 1e-6);
    }

    #[test]
    fn exact_observation_limit() {
        let m = make_ndlm(1.0, 0.9, 0.5, 1e-9, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(30, 1).unwrap(), 2).unwrap();
        let f = kalman_filter(&m, &sim.data, &th).unwrap();
        for (b, y) in f.filtered.iter().zip(sim.data.y_column()) {
            assert!((b.mean[0] - y.unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn missing_steps_contribute_nothing() {
        let m = make_ndlm(1.0, 1.0, 0.3, 0.2, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.1), None, Some(0.4)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        assert_eq!(f.loglik_terms[1], 0.0);
        assert_relative_eq!(f.loglik, f.loglik_terms.iter().sum::<f64>(), epsilon = 1e-15);
        assert_eq!(f.filtered[1], f.predicted[1]);
    }

    #[test]
    fn smoother_properties() {
        let m = make_ndlm(1.0, 0.8, 0.4, 0.3, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.7)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        let s = kalman_smoother(&f).unwrap();
        assert_eq!(s[1], f.filtered[0]);

        let sim = simulate(&m, &th, &regular_template(40, 1).unwrap(), 5).unwrap();
        let f = kalman_filter(&m, &sim.data, &th).unwrap();
        let s = kalman_smoother(&f).unwrap();
        for t in 0..40 {
            assert!(s[t + 1].cov[(0, 0)] <= f.filtered[t].cov[(0, 0)] + 1e-14);
        }
    }

    #[test]
    fn diffuse_process_smoother_equals_filter() {
        let m = make_ndlm(1.0, 1.0, 1e6, 0.3, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.3), Some(-1.0), Some(2.0)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        let s = kalman_smoother(&f).unwrap();
        for t in 0..3 {
            assert!((s[t + 1].mean[0] - f.filtered[t].mean[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn forecast_recursions() {
        let m = make_ndlm(1.0, 1.0, 0.3, 0.2, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.1), Some(0.4)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        let fc = forecast(&f, 5).unwrap();
        let pf = f.filtered[1].cov[(0, 0)];
        for (j, b) in fc.iter().enumerate() {
            assert_relative_eq!(b.cov[(0, 0)], pf + (j + 1) as f64 * 0.09, epsilon = 1e-12);
            assert_relative_eq!(b.mean[0], f.filtered[1].mean[0], epsilon = 1e-14);
        }
        let d3 = TimeSeriesData::from_options(&[Some(0.1), Some(0.4), None]).unwrap();
        let f3 = kalman_filter(&m, &d3, &th).unwrap();
        assert_relative_eq!(fc[0].mean[0], f3.predicted[2].mean[0], epsilon = 1e-14);
        assert_relative_eq!(fc[0].cov[(0, 0)], f3.predicted[2].cov[(0, 0)], epsilon = 1e-14);

        let m0 = make_ndlm(1.0, 0.0, 0.3, 0.2, 0.0).unwrap();
        let f0 = kalman_filter(&m0, &d, &m0.spec().nominal()).unwrap();
        assert!(forecast(&f0, 3).unwrap().iter().all(|b| b.mean[0] == 0.0));
        assert!(forecast(&f0, 0).is_err());
    }

    #[test]
    fn ffbs_degenerate_and_deterministic() {
        let m = make_ndlm(1.0, 1.0, 0.0, 0.2, 1.5).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(1.0), Some(2.0), Some(1.7)]).unwrap();
        let f = kalman_filter(&m, &d, &th).unwrap();
        for s in 0..10 {
            let z = ffbs_sample(&f, s);
            assert!(z.iter().all(|v| (v[0] - 1.5).abs() < 1e-12));
        }
        let m = make_ndlm(1.0, 1.0, 0.3, 0.2, 0.0).unwrap();
        let f = kalman_filter(&m, &d, &m.spec().nominal()).unwrap();
        assert_eq!(ffbs_sample(&f, 3), ffbs_sample(&f, 3));
        assert_ne!(ffbs_sample(&f, 3), ffbs_sample(&f, 4));
    }

    #[test]
    fn singular_innovation_names_step() {
        let mut m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        m.spec_mut().set_value("sigma_p", 0.0).unwrap();
        m.spec_mut().set_value("sigma_o", 0.0).unwrap();
        let d = TimeSeriesData::from_options(&[Some(0.0)]).unwrap();
        assert!(matches!(kalman_filter(&m, &d, &m.spec().nominal()), Err(SsmError::Numerical { step: 0, .. })));
    }
}
