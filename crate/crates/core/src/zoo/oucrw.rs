//! Continuous-time correlated random walk: an Ornstein-Uhlenbeck velocity
//! integrated into location, observed with normal error, one coordinate.
//!
//! The initial state `(mu0, v0)` refers to one lead interval before the first
//! observation; the lead interval equals the first observation spacing (or 1
//! for a single observation), so equally spaced data give identical
//! coefficients at every step.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::def;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{mvn_logpdf, robust_cholesky, InitialState, LinearGaussianStep, StateSpaceModel};
use crate::params::{ParamVector, ParameterSpec, Transform};
use crate::stats::{normal_cdf, normal_logpdf};

/// `a - 2(1 - e^{-a}) + (1 - e^{-2a})/2`, accurate for small `a`.
fn integrated_location_factor(a: f64) -> f64 {
    if a < 0.1 {
        // Σ_{n≥3} (-1)^n (2 - 2^{n-1}) a^n / n!
        let mut sum = 0.0;
        let mut pow = a * a;
        let mut fact = 2.0;
        for n in 3..20 {
            pow *= a;
            fact *= n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (2.0 - 2f64.powi(n - 1)) * pow / fact;
        }
        sum
    } else {
        a + 2.0 * (-a).exp_m1() - 0.5 * (-2.0 * a).exp_m1()
    }
}

/// Transition matrix and noise covariance of `(location, velocity)` over `delta`.
pub fn oucrw_transition(delta: f64, beta: f64, sigma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(SsmError::domain("delta", format!("time step must be positive, got {delta}")));
    }
    if !(beta > 0.0) {
        return Err(SsmError::domain("beta", "must be positive"));
    }
    if !(sigma > 0.0) {
        return Err(SsmError::domain("sigma", "must be positive"));
    }
    let a = beta * delta;
    let one_minus = -(-a).exp_m1();
    let transition = DMatrix::from_row_slice(2, 2, &[1.0, one_minus / beta, 0.0, (-a).exp()]);
    let s2 = sigma * sigma;
    let loc = s2 / (beta * beta * beta) * integrated_location_factor(a);
    let cov = s2 / (2.0 * beta * beta) * one_minus * one_minus;
    let vel = s2 * (-(-2.0 * a).exp_m1()) / (2.0 * beta);
    let noise = DMatrix::from_row_slice(2, 2, &[loc, cov, cov, vel]);
    Ok((transition, noise))
}

#[derive(Clone, Debug)]
pub struct OuCrw {
    spec: ParameterSpec,
}

/// Parameters: `beta, sigma, sigma_o, mu0, v0`; `v0` starts fixed at 0.
pub fn make_oucrw(beta: f64, sigma: f64, sigma_o: f64) -> Result<OuCrw> {
    for (n, v) in [("beta", beta), ("sigma", sigma), ("sigma_o", sigma_o)] {
        if !(v > 0.0) {
            return Err(SsmError::domain(n, "must be positive"));
        }
    }
    Ok(OuCrw {
        spec: ParameterSpec::new(vec![
            def("beta", Transform::Log, beta, false),
            def("sigma", Transform::Log, sigma, false),
            def("sigma_o", Transform::Log, sigma_o, false),
            def("mu0", Transform::Identity, 0.0, false),
            def("v0", Transform::Identity, 0.0, true),
        ])?,
    })
}

impl OuCrw {
    pub fn step_length(&self, data: &TimeSeriesData, t: usize) -> f64 {
        let ts = data.times();
        if t > 0 {
            ts[t] - ts[t - 1]
        } else if ts.len() > 1 {
            ts[1] - ts[0]
        } else {
            1.0
        }
    }

    fn coefficients(&self, data: &TimeSeriesData, t: usize, theta: &ParamVector) -> (DMatrix<f64>, DMatrix<f64>) {
        oucrw_transition(self.step_length(data, t), theta[0], theta[1]).expect("validated by check")
    }
}

impl StateSpaceModel for OuCrw {
    fn name(&self) -> &str {
        "oucrw"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn spec(&self) -> &ParameterSpec {
        &self.spec
    }
    fn spec_mut(&mut self) -> &mut ParameterSpec {
        &mut self.spec
    }

    fn check(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.spec.validate(theta)?;
        if data.obs_dim() != 1 {
            return Err(SsmError::Data("OU-CRW handles one coordinate; fit each coordinate separately".into()));
        }
        for (n, i) in [("beta", 0), ("sigma", 1)] {
            if !(theta[i] > 0.0) {
                return Err(SsmError::domain(n, "must be positive"));
            }
        }
        Ok(())
    }

    fn initial_state(&self, _data: &TimeSeriesData, theta: &ParamVector) -> InitialState {
        InitialState::Fixed(vec![theta[3], theta[4]])
    }

    fn process_log_density(&self, data: &TimeSeriesData, t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        let (f, q) = self.coefficients(data, t, theta);
        let mean = &f * DVector::from_column_slice(prev);
        mvn_logpdf(&DVector::from_column_slice(z), &mean, &q).unwrap_or(f64::NEG_INFINITY)
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        data.y(t).map_or(0.0, |y| normal_logpdf(y, z[0], theta[2]))
    }

    fn sample_process(&self, data: &TimeSeriesData, t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let (f, q) = self.coefficients(data, t, theta);
        let l = robust_cholesky(&q);
        let e = DVector::from_iterator(2, (0..2).map(|_| StandardNormal.sample(&mut *rng)));
        (&f * DVector::from_column_slice(prev) + l * e).iter().cloned().collect()
    }

    fn sample_observation(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        vec![z[0] + theta[2] * e]
    }

    fn linear_gaussian(&self, data: &TimeSeriesData, t: usize, theta: &ParamVector) -> Option<LinearGaussianStep> {
        let (f, q) = oucrw_transition(self.step_length(data, t), theta[0], theta[1]).ok()?;
        Some(LinearGaussianStep {
            transition: f,
            offset: DVector::zeros(2),
            state_cov: q,
            obs_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            obs_offset: DVector::zeros(1),
            obs_cov: DMatrix::from_element(1, 1, theta[2] * theta[2]),
        })
    }

    fn observation_moments(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![z[0]], vec![theta[2] * theta[2]]))
    }

    fn observation_cdf(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], _c: usize, y: f64, theta: &ParamVector) -> Option<f64> {
        Some(normal_cdf(y, z[0], theta[2]))
    }

    fn back_project(&self, data: &TimeSeriesData, t: usize, _theta: &ParamVector) -> Option<Vec<f64>> {
        data.y(t).map(|y| vec![y, 0.0])
    }
}
