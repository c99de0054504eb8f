//! The state-space model contract, simulation and the joint log-likelihood.
//!
//! Steps are indexed `t = 0..T-1`; step `t` carries state `z_{t+1}` and the
//! observations attached to it, with `z_0` supplied by [`InitialState`].

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::laplace::LatentObjective;
use crate::params::{ParamVector, ParameterSpec};
use crate::rng::derive_rng;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// `z_0` is a fixed (possibly estimated) parameter.
    Fixed(Vec<f64>),
    /// `z_0 ~ N(mean, cov)`.
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64> },
    /// Probability mass over the discrete state enumeration.
    Discrete(Vec<f64>),
}

/// Coefficients of one linear-Gaussian step:
/// `z_t = F z_{t-1} + c + N(0, Q)`, `y_t = H z_t + d + N(0, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianStep {
    pub transition: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub obs_matrix: DMatrix<f64>,
    pub obs_offset: DVector<f64>,
    pub obs_cov: DMatrix<f64>,
}

pub trait StateSpaceModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn spec(&self) -> &ParameterSpec;
    fn spec_mut(&mut self) -> &mut ParameterSpec;

    /// Validate the pairing of data and parameters before any computation.
    fn check(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.spec().validate(theta)?;
        if data.obs_dim() != self.obs_dim() {
            return Err(SsmError::Data(format!(
                "model `{}` expects {}-dimensional observations, data has {}",
                self.name(),
                self.obs_dim(),
                data.obs_dim()
            )));
        }
        Ok(())
    }

    /// Checks that ignore observed values, for data used only as a layout template.
    fn check_layout(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.check(data, theta)
    }

    fn num_steps(&self, data: &TimeSeriesData) -> usize {
        data.len()
    }

    /// Whether step `t` carries at least one observed value.
    fn observed_at(&self, data: &TimeSeriesData, t: usize) -> bool {
        data.any_observed(t)
    }

    fn initial_state(&self, data: &TimeSeriesData, theta: &ParamVector) -> InitialState;

    fn process_log_density(&self, data: &TimeSeriesData, t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64;

    /// Sum over observed coordinates of step `t`; zero when nothing is observed.
    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64;

    fn sample_process(
        &self,
        data: &TimeSeriesData,
        t: usize,
        prev: &[f64],
        theta: &ParamVector,
        rng: &mut dyn RngCore,
    ) -> Vec<f64>;

    /// A full observation record for step `t` given `z`.
    fn sample_observation(
        &self,
        data: &TimeSeriesData,
        t: usize,
        z: &[f64],
        theta: &ParamVector,
        rng: &mut dyn RngCore,
    ) -> Vec<f64>;

    /// Overwrite the observed entries of `out` belonging to step `t`.
    fn write_observations(
        &self,
        template: &TimeSeriesData,
        t: usize,
        z: &[f64],
        theta: &ParamVector,
        rng: &mut dyn RngCore,
        out: &mut TimeSeriesData,
    ) {
        let draw = self.sample_observation(template, t, z, theta, rng);
        let rec = template
            .record(t)
            .iter()
            .zip(draw)
            .map(|(m, v)| m.map(|_| v))
            .collect();
        out.set_record(t, rec);
    }

    fn linear_gaussian(&self, _data: &TimeSeriesData, _t: usize, _theta: &ParamVector) -> Option<LinearGaussianStep> {
        None
    }

    /// Enumeration of state values for finite-state models.
    fn discrete_states(&self) -> Option<Vec<f64>> {
        None
    }

    /// Row-stochastic transition matrix `Γ[i][j] = Pr(z_t = j | z_{t-1} = i)`.
    fn transition_matrix(&self, _data: &TimeSeriesData, _t: usize, _theta: &ParamVector) -> Option<DMatrix<f64>> {
        None
    }

    /// Conditional mean and variance of each observation coordinate given `z`.
    fn observation_moments(
        &self,
        _data: &TimeSeriesData,
        _t: usize,
        _z: &[f64],
        _theta: &ParamVector,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Conditional CDF of coordinate `coord` of the step-`t` observation.
    fn observation_cdf(
        &self,
        _data: &TimeSeriesData,
        _t: usize,
        _z: &[f64],
        _coord: usize,
        _y: f64,
        _theta: &ParamVector,
    ) -> Option<f64> {
        None
    }

    /// Process noise implied by a transition, with the scale of its assumed
    /// zero-mean normal law: `(noise, sd)` per coordinate.
    fn process_noise(
        &self,
        _data: &TimeSeriesData,
        _t: usize,
        _prev: &[f64],
        _z: &[f64],
        _theta: &ParamVector,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Rough state value implied by the step-`t` observation alone.
    fn back_project(&self, _data: &TimeSeriesData, _t: usize, _theta: &ParamVector) -> Option<Vec<f64>> {
        None
    }

    /// Default bounds for a 1-D state grid.
    fn grid_bounds(&self, _data: &TimeSeriesData, _theta: &ParamVector) -> Option<(f64, f64)> {
        None
    }

    /// Whether the transition density is the same at every step.
    fn time_homogeneous(&self) -> bool {
        false
    }

    /// Model-specific latent objective for the Laplace backend.
    fn laplace_objective<'a>(
        &'a self,
        _data: &'a TimeSeriesData,
        _theta: &'a ParamVector,
    ) -> Option<Result<Box<dyn LatentObjective + 'a>>> {
        None
    }
}

/// Simulated trajectory `z_0..z_T` and data on the template's layout.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub states: Vec<Vec<f64>>,
    pub data: TimeSeriesData,
}

pub(crate) fn draw_initial(init: &InitialState, states: Option<&[f64]>, rng: &mut dyn RngCore) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    match init {
        InitialState::Fixed(z) => z.clone(),
        InitialState::Gaussian { mean, cov } => {
            let n = mean.len();
            let l = robust_cholesky(cov);
            let e = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut *rng)));
            (mean + l * e).iter().cloned().collect()
        }
        InitialState::Discrete(p) => {
            let u: f64 = rand::Rng::random(&mut *rng);
            let mut acc = 0.0;
            let values = states.expect("discrete initial state needs an enumeration");
            for (k, &pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    return vec![values[k]];
                }
            }
            vec![values[p.len() - 1]]
        }
    }
}

/// Lower Cholesky factor allowing semidefinite input (zero rows for null directions).
pub fn robust_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    l
}

/// Multivariate normal log-density; `None` when `cov` is singular.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let n = x.len();
    let chol = cov.clone().cholesky()?;
    let r = x - mean;
    let sol = chol.solve(&r);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some(-0.5 * (n as f64 * crate::stats::LN_2PI + logdet + r.dot(&sol)))
}

pub fn simulate(
    model: &dyn StateSpaceModel,
    theta: &ParamVector,
    template: &TimeSeriesData,
    seed: u64,
) -> Result<Simulation> {
    model.check_layout(template, theta)?;
    let mut rng = derive_rng(seed, &[0x51]);
    let init = model.initial_state(template, theta);
    let enumeration = model.discrete_states();
    let z0 = draw_initial(&init, enumeration.as_deref(), &mut rng);
    let n = model.num_steps(template);
    let mut states = Vec::with_capacity(n + 1);
    states.push(z0);
    let mut out = template.clone();
    for t in 0..n {
        let z = model.sample_process(template, t, &states[t], theta, &mut rng);
        model.write_observations(template, t, &z, theta, &mut rng, &mut out);
        states.push(z);
    }
    Ok(Simulation { states, data: out })
}

/// Fully observed template on times `1..=T` for a model with the given observation dimension.
pub fn regular_template(t_len: usize, obs_dim: usize) -> Result<TimeSeriesData> {
    TimeSeriesData::new(
        (1..=t_len).map(|t| t as f64).collect(),
        vec![vec![Some(0.0); obs_dim]; t_len],
    )
}

/// `Σ_t [log g(y_t|z_t) + log f(z_t|z_{t-1})]`.
///
/// `states` holds `z_1..z_T`, or `z_0..z_T`; in the latter case a Gaussian
/// or discrete initial law contributes its density of `z_0`.
pub fn joint_log_likelihood(
    model: &dyn StateSpaceModel,
    theta: &ParamVector,
    states: &[Vec<f64>],
    data: &TimeSeriesData,
) -> Result<f64> {
    model.check(data, theta)?;
    let n = model.num_steps(data);
    let init = model.initial_state(data, theta);
    let enumeration = model.discrete_states();
    if let Some(values) = &enumeration {
        for (i, z) in states.iter().enumerate() {
            if !values.contains(&z[0]) {
                return Err(SsmError::domain("state", format!("state {} at position {i} is not a valid discrete state", z[0])));
            }
        }
    }
    let (z0, rest, mut total) = if states.len() == n + 1 {
        let z0 = states[0].clone();
        let lp = match &init {
            InitialState::Fixed(_) => 0.0,
            InitialState::Gaussian { mean, cov } => {
                let x = DVector::from_column_slice(&z0);
                mvn_logpdf(&x, mean, cov)
                    .ok_or_else(|| SsmError::numerical(0, "singular initial covariance"))?
            }
            InitialState::Discrete(p) => {
                let values = enumeration.as_ref().expect("enumeration");
                let k = values.iter().position(|v| *v == z0[0]).expect("validated");
                p[k].ln()
            }
        };
        (z0, &states[1..], lp)
    } else if states.len() == n {
        let certain = match &init {
            InitialState::Discrete(p) => p.iter().position(|&w| w == 1.0),
            _ => None,
        };
        match (&init, certain) {
            (InitialState::Fixed(z), _) => (z.clone(), states, 0.0),
            (InitialState::Discrete(_), Some(k)) => (vec![enumeration.as_ref().expect("enumeration")[k]], states, 0.0),
            _ => {
                return Err(SsmError::Config(
                    "model has a random initial state; supply z_0 as the first state".into(),
                ))
            }
        }
    } else {
        return Err(SsmError::Data(format!(
            "expected {n} or {} states, got {}",
            n + 1,
            states.len()
        )));
    };
    let mut prev = z0;
    for (t, z) in rest.iter().enumerate() {
        total += model.process_log_density(data, t, &prev, z, theta);
        total += model.observation_log_density(data, t, z, theta);
        prev = z.clone();
    }
    Ok(total)
}
