//! Toy normal dynamic linear model and its product-gain variant.
//!
//! `z_t = β z_{t-1} + ε_t`, `y_t = α z_t + η_t`; the product variant writes
//! the gain as `α = a·b`, which makes `a` and `b` individually unidentifiable.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::def;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{InitialState, LinearGaussianStep, StateSpaceModel};
use crate::params::{ParamVector, ParameterSpec, Transform};
use crate::stats::{normal_cdf, normal_logpdf};

#[derive(Clone, Debug)]
pub struct Ndlm {
    spec: ParameterSpec,
    product: bool,
}

pub struct NdlmCoefs {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_p: f64,
    pub sigma_o: f64,
    pub z0: f64,
}

/// Toy NDLM; `alpha` and `beta` start fixed, the noise scales and `z0` free.
pub fn make_ndlm(alpha: f64, beta: f64, sigma_p: f64, sigma_o: f64, z0: f64) -> Result<Ndlm> {
    if sigma_p == 0.0 && sigma_o == 0.0 {
        return Err(SsmError::Config("sigma_p and sigma_o cannot both be zero".into()));
    }
    let spec = ParameterSpec::new(vec![
        def("alpha", Transform::Identity, alpha, true),
        def("beta", Transform::Identity, beta, true),
        def("sigma_p", Transform::Log, sigma_p, false),
        def("sigma_o", Transform::Log, sigma_o, false),
        def("z0", Transform::Identity, z0, false),
    ])?;
    Ok(Ndlm { spec, product: false })
}

/// NDLM with observation gain `a·b`; `sigma_p`, `beta` and `z0` start fixed.
pub fn make_product_ndlm(a: f64, b: f64, beta: f64, sigma_p: f64, sigma_o: f64, z0: f64) -> Result<Ndlm> {
    if sigma_p == 0.0 && sigma_o == 0.0 {
        return Err(SsmError::Config("sigma_p and sigma_o cannot both be zero".into()));
    }
    let spec = ParameterSpec::new(vec![
        def("a", Transform::Log, a, false),
        def("b", Transform::Log, b, false),
        def("beta", Transform::Identity, beta, true),
        def("sigma_p", Transform::Log, sigma_p, true),
        def("sigma_o", Transform::Log, sigma_o, false),
        def("z0", Transform::Identity, z0, true),
    ])?;
    Ok(Ndlm { spec, product: true })
}

impl Ndlm {
    pub fn coefs(&self, theta: &ParamVector) -> NdlmCoefs {
        let v = theta.values();
        if self.product {
            NdlmCoefs { alpha: v[0] * v[1], beta: v[2], sigma_p: v[3], sigma_o: v[4], z0: v[5] }
        } else {
            NdlmCoefs { alpha: v[0], beta: v[1], sigma_p: v[2], sigma_o: v[3], z0: v[4] }
        }
    }
}

impl StateSpaceModel for Ndlm {
    fn name(&self) -> &str {
        if self.product {
            "ndlm_product"
        } else {
            "ndlm"
        }
    }
    fn state_dim(&self) -> usize {
        1
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

    fn initial_state(&self, _data: &TimeSeriesData, theta: &ParamVector) -> InitialState {
        InitialState::Fixed(vec![self.coefs(theta).z0])
    }

    fn process_log_density(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        let c = self.coefs(theta);
        normal_logpdf(z[0], c.beta * prev[0], c.sigma_p)
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        match data.y(t) {
            None => 0.0,
            Some(y) => {
                let c = self.coefs(theta);
                normal_logpdf(y, c.alpha * z[0], c.sigma_o)
            }
        }
    }

    fn sample_process(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let c = self.coefs(theta);
        let e: f64 = StandardNormal.sample(rng);
        vec![c.beta * prev[0] + c.sigma_p * e]
    }

    fn sample_observation(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let c = self.coefs(theta);
        let e: f64 = StandardNormal.sample(rng);
        vec![c.alpha * z[0] + c.sigma_o * e]
    }

    fn linear_gaussian(&self, _d: &TimeSeriesData, _t: usize, theta: &ParamVector) -> Option<LinearGaussianStep> {
        let c = self.coefs(theta);
        Some(LinearGaussianStep {
            transition: DMatrix::from_element(1, 1, c.beta),
            offset: DVector::zeros(1),
            state_cov: DMatrix::from_element(1, 1, c.sigma_p * c.sigma_p),
            obs_matrix: DMatrix::from_element(1, 1, c.alpha),
            obs_offset: DVector::zeros(1),
            obs_cov: DMatrix::from_element(1, 1, c.sigma_o * c.sigma_o),
        })
    }

    fn observation_moments(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let c = self.coefs(theta);
        Some((vec![c.alpha * z[0]], vec![c.sigma_o * c.sigma_o]))
    }

    fn observation_cdf(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], _coord: usize, y: f64, theta: &ParamVector) -> Option<f64> {
        let c = self.coefs(theta);
        Some(normal_cdf(y, c.alpha * z[0], c.sigma_o))
    }

    fn process_noise(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let c = self.coefs(theta);
        Some((vec![z[0] - c.beta * prev[0]], vec![c.sigma_p]))
    }

    fn back_project(&self, data: &TimeSeriesData, t: usize, theta: &ParamVector) -> Option<Vec<f64>> {
        let c = self.coefs(theta);
        match data.y(t) {
            Some(y) if c.alpha != 0.0 => Some(vec![y / c.alpha]),
            _ => None,
        }
    }

    fn grid_bounds(&self, data: &TimeSeriesData, theta: &ParamVector) -> Option<(f64, f64)> {
        let c = self.coefs(theta);
        let pad = 8.0 * c.sigma_p.max(c.sigma_o / c.alpha.abs().max(1e-12));
        super::padded_range(
            (0..data.len()).filter_map(|t| self.back_project(data, t, theta).map(|v| v[0])).chain([c.z0]),
            pad,
        )
    }

    fn time_homogeneous(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{joint_log_likelihood, regular_template, simulate};
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_skeleton() {
        let mut m = make_ndlm(1.0, 1.0, 0.0, 0.1, 3.0).unwrap();
        m.spec_mut().set_value("sigma_o", 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(20, 1).unwrap(), 4).unwrap();
        assert!(sim.states.iter().all(|z| z[0] == 3.0));
        assert!(sim.data.y_column().iter().all(|y| *y == Some(3.0)));
    }

    #[test]
    fn both_noises_zero_rejected() {
        assert!(matches!(make_ndlm(1.0, 1.0, 0.0, 0.0, 0.0), Err(SsmError::Config(_))));
    }

    #[test]
    fn joint_loglik_examples() {
        let m = make_ndlm(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(0.0)]).unwrap();
        let v = joint_log_likelihood(&m, &th, &[vec![0.0]], &d).unwrap();
        assert_relative_eq!(v, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        assert!((v + 1.837877).abs() < 1e-6);
        let d = TimeSeriesData::from_options(&[None]).unwrap();
        let v = joint_log_likelihood(&m, &th, &[vec![0.0]], &d).unwrap();
        assert!((v + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn process_density_matches_direct_formula() {
        let m = make_ndlm(0.7, 0.4, 0.3, 0.2, 0.0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(1.0)]).unwrap();
        let (prev, z) = (1.3, -0.2);
        let r: f64 = (z - 0.4 * prev) / 0.3;
        let direct = -0.5 * r * r - (0.3f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(m.process_log_density(&d, 0, &[prev], &[z], &th), direct, epsilon = 1e-13);
    }

    #[test]
    fn product_gain() {
        let m = make_product_ndlm(2.0, 1.5, 1.0, 0.1, 0.2, 0.0).unwrap();
        let th = m.spec().nominal();
        assert_eq!(m.coefs(&th).alpha, 3.0);
        assert_eq!(m.spec().free_names(), vec!["a", "b", "sigma_o"]);
    }
}
