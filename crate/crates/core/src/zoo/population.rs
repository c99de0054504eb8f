//! Population-dynamics models: stochastic logistic and Gompertz.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::def;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{InitialState, LinearGaussianStep, StateSpaceModel};
use crate::params::{ParamVector, ParameterSpec, Transform};
use crate::stats::{normal_cdf, normal_logpdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogisticScale {
    /// State is abundance `z_t`.
    Natural,
    /// State is `w_t = log z_t`.
    LogState,
}

/// Stochastic logistic growth with additive normal observation error.
#[derive(Clone, Debug)]
pub struct Logistic {
    spec: ParameterSpec,
    scale: LogisticScale,
}

/// Parameters: `beta0, beta1, sigma_p, sigma_o, z0` (z0 on the abundance scale).
pub fn make_logistic(beta0: f64, beta1: f64, sigma_p: f64, sigma_o: f64, z0: f64, scale: LogisticScale) -> Result<Logistic> {
    if beta1 > 0.0 {
        return Err(SsmError::domain("beta1", "density dependence requires beta1 <= 0"));
    }
    let spec = ParameterSpec::new(vec![
        def("beta0", Transform::Identity, beta0, false),
        def("beta1", Transform::Identity, beta1, false),
        def("sigma_p", Transform::Log, sigma_p, false),
        def("sigma_o", Transform::Log, sigma_o, false),
        def("z0", Transform::Log, z0, true),
    ])?;
    Ok(Logistic { spec, scale })
}

impl Logistic {
    fn growth(&self, theta: &ParamVector, abundance: f64) -> f64 {
        theta[0] + theta[1] * abundance
    }
    fn abundance(&self, z: f64) -> f64 {
        match self.scale {
            LogisticScale::Natural => z,
            LogisticScale::LogState => z.exp(),
        }
    }
}

impl StateSpaceModel for Logistic {
    fn name(&self) -> &str {
        match self.scale {
            LogisticScale::Natural => "logistic",
            LogisticScale::LogState => "logistic_log",
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

    fn check(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.spec.validate(theta)?;
        if theta[1] > 0.0 {
            return Err(SsmError::domain("beta1", "density dependence requires beta1 <= 0"));
        }
        if data.obs_dim() != 1 {
            return Err(SsmError::Data("logistic model expects univariate observations".into()));
        }
        Ok(())
    }

    fn initial_state(&self, _data: &TimeSeriesData, theta: &ParamVector) -> InitialState {
        let z0 = theta[4];
        InitialState::Fixed(vec![match self.scale {
            LogisticScale::Natural => z0,
            LogisticScale::LogState => z0.ln(),
        }])
    }

    fn process_log_density(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        let sp = theta[2];
        match self.scale {
            LogisticScale::Natural => {
                if z[0] <= 0.0 || prev[0] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let m = prev[0].ln() + self.growth(theta, prev[0]);
                normal_logpdf(z[0].ln(), m, sp) - z[0].ln()
            }
            LogisticScale::LogState => {
                let m = prev[0] + self.growth(theta, prev[0].exp());
                normal_logpdf(z[0], m, sp)
            }
        }
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        match data.y(t) {
            None => 0.0,
            Some(y) => normal_logpdf(y, self.abundance(z[0]), theta[3]),
        }
    }

    fn sample_process(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        let eps = theta[2] * e;
        match self.scale {
            LogisticScale::Natural => vec![prev[0] * (self.growth(theta, prev[0]) + eps).exp()],
            LogisticScale::LogState => vec![prev[0] + self.growth(theta, prev[0].exp()) + eps],
        }
    }

    fn sample_observation(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        vec![self.abundance(z[0]) + theta[3] * e]
    }

    fn observation_moments(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![self.abundance(z[0])], vec![theta[3] * theta[3]]))
    }

    fn observation_cdf(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], _c: usize, y: f64, theta: &ParamVector) -> Option<f64> {
        Some(normal_cdf(y, self.abundance(z[0]), theta[3]))
    }

    fn process_noise(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let eps = match self.scale {
            LogisticScale::Natural => {
                if z[0] <= 0.0 || prev[0] <= 0.0 {
                    return None;
                }
                (z[0] / prev[0]).ln() - self.growth(theta, prev[0])
            }
            LogisticScale::LogState => z[0] - prev[0] - self.growth(theta, prev[0].exp()),
        };
        Some((vec![eps], vec![theta[2]]))
    }

    fn back_project(&self, data: &TimeSeriesData, t: usize, _theta: &ParamVector) -> Option<Vec<f64>> {
        let y = data.y(t)?;
        let y = y.max(1e-6);
        Some(vec![match self.scale {
            LogisticScale::Natural => y,
            LogisticScale::LogState => y.ln(),
        }])
    }

    fn grid_bounds(&self, data: &TimeSeriesData, theta: &ParamVector) -> Option<(f64, f64)> {
        let ys: Vec<f64> = data.y_column().into_iter().flatten().chain([theta[4]]).collect();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let so = theta[3];
        let grow = (8.0 * theta[2]).exp();
        let (lo, hi) = ((lo - 8.0 * so).min(lo / grow).max(hi * 1e-6), (hi + 8.0 * so).max(hi * grow));
        Some(match self.scale {
            LogisticScale::Natural => (lo, hi),
            LogisticScale::LogState => (lo.ln(), hi.ln()),
        })
    }

    fn time_homogeneous(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GompertzForm {
    /// State `z_t` (abundance), observations `y_t > 0` with lognormal error.
    Raw,
    /// State `w_t = log z_t`, observations `g_t = log y_t` with normal error.
    Linearized,
}

/// Stochastic Gompertz model, optionally with a process covariate `beta2·p_t`.
///
/// Parameters: `beta0, beta1, sigma_p, sigma_o, w0[, beta2]`; `w0` is the
/// log of the initial abundance in both forms.
#[derive(Clone, Debug)]
pub struct Gompertz {
    spec: ParameterSpec,
    form: GompertzForm,
    covariate: Option<String>,
}

pub fn make_gompertz(
    beta0: f64,
    beta1: f64,
    sigma_p: f64,
    sigma_o: f64,
    w0: f64,
    form: GompertzForm,
    covariate: Option<(&str, f64)>,
) -> Result<Gompertz> {
    let mut defs = vec![
        def("beta0", Transform::Identity, beta0, false),
        def("beta1", Transform::Identity, beta1, false),
        def("sigma_p", Transform::Log, sigma_p, false),
        def("sigma_o", Transform::Log, sigma_o, false),
        def("w0", Transform::Identity, w0, true),
    ];
    if let Some((_, b2)) = covariate {
        defs.push(def("beta2", Transform::Identity, b2, false));
    }
    Ok(Gompertz {
        spec: ParameterSpec::new(defs)?,
        form,
        covariate: covariate.map(|(n, _)| n.to_string()),
    })
}

impl Gompertz {
    /// Mean of `w_t` given `w_{t-1}`.
    fn log_mean(&self, data: &TimeSeriesData, t: usize, w_prev: f64, theta: &ParamVector) -> f64 {
        let mut m = theta[0] + (1.0 + theta[1]) * w_prev;
        if let Some(name) = &self.covariate {
            m += theta[5] * data.covariate(name).map(|p| p[t]).unwrap_or(f64::NAN);
        }
        m
    }
}

impl StateSpaceModel for Gompertz {
    fn name(&self) -> &str {
        match self.form {
            GompertzForm::Raw => "gompertz",
            GompertzForm::Linearized => "gompertz_linear",
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

    fn check_layout(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.spec.validate(theta)?;
        if data.obs_dim() != 1 {
            return Err(SsmError::Data("Gompertz model expects univariate observations".into()));
        }
        if let Some(name) = &self.covariate {
            data.covariate(name)?;
        }
        Ok(())
    }

    fn check(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.check_layout(data, theta)?;
        if self.form == GompertzForm::Raw && data.y_column().iter().flatten().any(|&y| y <= 0.0) {
            return Err(SsmError::Data("raw Gompertz observations must be positive".into()));
        }
        Ok(())
    }

    fn initial_state(&self, _data: &TimeSeriesData, theta: &ParamVector) -> InitialState {
        InitialState::Fixed(vec![match self.form {
            GompertzForm::Raw => theta[4].exp(),
            GompertzForm::Linearized => theta[4],
        }])
    }

    fn process_log_density(&self, data: &TimeSeriesData, t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        match self.form {
            GompertzForm::Linearized => normal_logpdf(z[0], self.log_mean(data, t, prev[0], theta), theta[2]),
            GompertzForm::Raw => {
                if z[0] <= 0.0 || prev[0] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let w = z[0].ln();
                normal_logpdf(w, self.log_mean(data, t, prev[0].ln(), theta), theta[2]) - w
            }
        }
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        let Some(y) = data.y(t) else { return 0.0 };
        match self.form {
            GompertzForm::Linearized => normal_logpdf(y, z[0], theta[3]),
            GompertzForm::Raw => {
                if z[0] <= 0.0 || y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                normal_logpdf(y.ln(), z[0].ln(), theta[3]) - y.ln()
            }
        }
    }

    fn sample_process(&self, data: &TimeSeriesData, t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        match self.form {
            GompertzForm::Linearized => vec![self.log_mean(data, t, prev[0], theta) + theta[2] * e],
            GompertzForm::Raw => vec![(self.log_mean(data, t, prev[0].ln(), theta) + theta[2] * e).exp()],
        }
    }

    fn sample_observation(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        match self.form {
            GompertzForm::Linearized => vec![z[0] + theta[3] * e],
            GompertzForm::Raw => vec![z[0] * (theta[3] * e).exp()],
        }
    }

    fn linear_gaussian(&self, data: &TimeSeriesData, t: usize, theta: &ParamVector) -> Option<LinearGaussianStep> {
        if self.form != GompertzForm::Linearized {
            return None;
        }
        let mut c = theta[0];
        if let Some(name) = &self.covariate {
            c += theta[5] * data.covariate(name).ok()?[t];
        }
        Some(LinearGaussianStep {
            transition: DMatrix::from_element(1, 1, 1.0 + theta[1]),
            offset: DVector::from_element(1, c),
            state_cov: DMatrix::from_element(1, 1, theta[2] * theta[2]),
            obs_matrix: DMatrix::from_element(1, 1, 1.0),
            obs_offset: DVector::zeros(1),
            obs_cov: DMatrix::from_element(1, 1, theta[3] * theta[3]),
        })
    }

    fn observation_moments(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let s2 = theta[3] * theta[3];
        Some(match self.form {
            GompertzForm::Linearized => (vec![z[0]], vec![s2]),
            GompertzForm::Raw => {
                let m = z[0] * (0.5 * s2).exp();
                (vec![m], vec![m * m * (s2.exp() - 1.0)])
            }
        })
    }

    fn observation_cdf(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], _c: usize, y: f64, theta: &ParamVector) -> Option<f64> {
        Some(match self.form {
            GompertzForm::Linearized => normal_cdf(y, z[0], theta[3]),
            GompertzForm::Raw => {
                if y <= 0.0 {
                    0.0
                } else {
                    normal_cdf(y.ln(), z[0].ln(), theta[3])
                }
            }
        })
    }

    fn process_noise(&self, data: &TimeSeriesData, t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let eps = match self.form {
            GompertzForm::Linearized => z[0] - self.log_mean(data, t, prev[0], theta),
            GompertzForm::Raw => {
                if z[0] <= 0.0 || prev[0] <= 0.0 {
                    return None;
                }
                z[0].ln() - self.log_mean(data, t, prev[0].ln(), theta)
            }
        };
        Some((vec![eps], vec![theta[2]]))
    }

    fn back_project(&self, data: &TimeSeriesData, t: usize, _theta: &ParamVector) -> Option<Vec<f64>> {
        data.y(t).map(|y| vec![y])
    }

    fn grid_bounds(&self, data: &TimeSeriesData, theta: &ParamVector) -> Option<(f64, f64)> {
        let pad = 8.0 * theta[2].max(theta[3]);
        let logs = data.y_column().into_iter().flatten().map(|y| match self.form {
            GompertzForm::Linearized => y,
            GompertzForm::Raw => y.ln(),
        });
        let (lo, hi) = super::padded_range(logs.chain([theta[4]]), pad)?;
        Some(match self.form {
            GompertzForm::Linearized => (lo, hi),
            GompertzForm::Raw => (lo.exp(), hi.exp()),
        })
    }

    fn time_homogeneous(&self) -> bool {
        self.covariate.is_none()
    }
}
