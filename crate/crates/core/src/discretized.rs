//! Grid-based filtering for one-dimensional continuous states and exact
//! forward/backward recursions for finite-state hidden Markov models.

use nalgebra::{DMatrix, DVector};

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{InitialState, StateSpaceModel};
use crate::params::ParamVector;
use crate::stats::normal_logpdf;

#[derive(Clone, Debug, PartialEq)]
pub struct StateGrid {
    pub lower: f64,
    pub upper: f64,
    pub centers: Vec<f64>,
    pub width: f64,
}

impl StateGrid {
    pub fn new(lower: f64, upper: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(SsmError::Config("a state grid needs at least 2 cells".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(SsmError::Config(format!("invalid grid bounds [{lower}, {upper}]")));
        }
        let width = (upper - lower) / m as f64;
        let centers = (0..m).map(|i| lower + (i as f64 + 0.5) * width).collect();
        Ok(Self { lower, upper, centers, width })
    }

    /// Bounds from the model's default heuristic.
    pub fn auto(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, m: usize) -> Result<Self> {
        let (lo, hi) = model.grid_bounds(data, theta).ok_or_else(|| {
            SsmError::Config(format!("model `{}` has no default grid bounds; pass them explicitly", model.name()))
        })?;
        Self::new(lo, hi, m)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct GridFilterResult {
    pub grid: StateGrid,
    /// Normalized predicted cell masses per step.
    pub predicted: Vec<Vec<f64>>,
    /// Normalized filtered cell masses per step.
    pub filtered: Vec<Vec<f64>>,
    pub loglik_terms: Vec<f64>,
    pub loglik: f64,
}

impl GridFilterResult {
    /// Predictive CDF of observation coordinate `coord` at step `t`.
    pub fn predictive_cdf(&self, model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, t: usize, coord: usize, y: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (c, &w) in self.grid.centers.iter().zip(&self.predicted[t]) {
            if w > 0.0 {
                acc += w * model.observation_cdf(data, t, &[*c], coord, y, theta)?;
            }
        }
        Some(acc.clamp(0.0, 1.0))
    }

    /// Predictive mean and variance of observation coordinate `coord` at step `t`.
    pub fn predictive_moments(&self, model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, t: usize, coord: usize) -> Option<(f64, f64)> {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (c, &w) in self.grid.centers.iter().zip(&self.predicted[t]) {
            if w > 0.0 {
                let (mu, var) = model.observation_moments(data, t, &[*c], theta)?;
                m1 += w * mu[coord];
                m2 += w * (var[coord] + mu[coord] * mu[coord]);
            }
        }
        Some((m1, (m2 - m1 * m1).max(0.0)))
    }

    pub fn filtered_means(&self) -> Vec<f64> {
        self.filtered.iter().map(|p| mass_mean(&self.grid, p)).collect()
    }
}

fn mass_mean(grid: &StateGrid, p: &[f64]) -> f64 {
    grid.centers.iter().zip(p).map(|(c, w)| c * w).sum()
}

/// `K[i][j]`: midpoint-rule mass moved from cell `i` into cell `j`.
fn transition_masses(model: &dyn StateSpaceModel, data: &TimeSeriesData, t: usize, grid: &StateGrid, theta: &ParamVector) -> DMatrix<f64> {
    let m = grid.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        let from = [grid.centers[i]];
        for j in 0..m {
            let lp = model.process_log_density(data, t, &from, &[grid.centers[j]], theta);
            k[(i, j)] = lp.exp() * grid.width;
        }
    }
    k
}

fn first_prediction(model: &dyn StateSpaceModel, data: &TimeSeriesData, grid: &StateGrid, theta: &ParamVector) -> Result<DVector<f64>> {
    let m = grid.len();
    match model.initial_state(data, theta) {
        InitialState::Fixed(z0) => Ok(DVector::from_iterator(
            m,
            grid.centers
                .iter()
                .map(|&c| model.process_log_density(data, 0, &z0, &[c], theta).exp() * grid.width),
        )),
        InitialState::Gaussian { mean, cov } => {
            let sd = cov[(0, 0)].sqrt();
            let p0 = DVector::from_iterator(m, grid.centers.iter().map(|&c| normal_logpdf(c, mean[0], sd).exp() * grid.width));
            Ok(transition_masses(model, data, 0, grid, theta).transpose() * p0)
        }
        InitialState::Discrete(_) => Err(SsmError::Config("use hmm_forward for discrete-state models".into())),
    }
}

pub fn grid_filter(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, grid: &StateGrid) -> Result<GridFilterResult> {
    if model.state_dim() != 1 {
        return Err(SsmError::Unsupported(format!(
            "grid filtering is limited to one state dimension (model `{}` has {}); a 1000-cell grid per dimension would need 1000^d cells",
            model.name(),
            model.state_dim()
        )));
    }
    model.check(data, theta)?;
    let n = model.num_steps(data);
    let homogeneous = model.time_homogeneous();
    let mut kernel: Option<DMatrix<f64>> = None;
    let mut out = GridFilterResult {
        grid: grid.clone(),
        predicted: Vec::with_capacity(n),
        filtered: Vec::with_capacity(n),
        loglik_terms: Vec::with_capacity(n),
        loglik: 0.0,
    };
    let mut filt: DVector<f64> = DVector::zeros(grid.len());
    for t in 0..n {
        let pred = if t == 0 {
            first_prediction(model, data, grid, theta)?
        } else {
            if kernel.is_none() || !homogeneous {
                kernel = Some(transition_masses(model, data, t, grid, theta));
            }
            kernel.as_ref().unwrap().tr_mul(&filt)
        };
        let total = pred.sum();
        if !(total > 1e-300) {
            return Err(SsmError::GridCoverage { step: t });
        }
        let pred_norm: Vec<f64> = pred.iter().map(|v| v / total).collect();
        let ll = if model.observed_at(data, t) {
            let lg: Vec<f64> = grid.centers.iter().map(|&c| model.observation_log_density(data, t, &[c], theta)).collect();
            let mx = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return Err(SsmError::GridCoverage { step: t });
            }
            let mut post: Vec<f64> = pred.iter().zip(&lg).map(|(p, l)| p * (l - mx).exp()).collect();
            let s: f64 = post.iter().sum();
            if !(s > 1e-300) {
                return Err(SsmError::GridCoverage { step: t });
            }
            post.iter_mut().for_each(|v| *v /= s);
            filt = DVector::from_vec(post);
            mx + s.ln()
        } else {
            filt = DVector::from_vec(pred_norm.clone());
            0.0
        };
        out.predicted.push(pred_norm);
        out.filtered.push(filt.iter().cloned().collect());
        out.loglik_terms.push(ll);
        out.loglik += ll;
    }
    Ok(out)
}

/// Smoothed cell masses per step from a grid filter run.
pub fn grid_smooth(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, filter: &GridFilterResult) -> Vec<Vec<f64>> {
    let n = filter.filtered.len();
    let grid = &filter.grid;
    let mut out = vec![Vec::new(); n];
    if n == 0 {
        return out;
    }
    out[n - 1] = filter.filtered[n - 1].clone();
    let mut kernel: Option<DMatrix<f64>> = None;
    for t in (0..n - 1).rev() {
        if kernel.is_none() || !model.time_homogeneous() {
            kernel = Some(transition_masses(model, data, t + 1, grid, theta));
        }
        let k = kernel.as_ref().unwrap();
        let f = DVector::from_column_slice(&filter.filtered[t]);
        let pred = k.tr_mul(&f);
        let ratio = DVector::from_iterator(
            grid.len(),
            out[t + 1].iter().zip(pred.iter()).map(|(s, p)| if *p > 0.0 { s / p } else { 0.0 }),
        );
        let back = k * ratio;
        let mut s: Vec<f64> = f.iter().zip(back.iter()).map(|(a, b)| a * b).collect();
        let tot: f64 = s.iter().sum();
        if tot > 0.0 {
            s.iter_mut().for_each(|v| *v /= tot);
        }
        out[t] = s;
    }
    out
}

pub fn grid_means(grid: &StateGrid, masses: &[Vec<f64>]) -> Vec<f64> {
    masses.iter().map(|p| mass_mean(grid, p)).collect()
}

#[derive(Clone, Debug)]
pub struct HmmForward {
    pub loglik: f64,
    pub filtered: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    initial: Vec<f64>,
    emissions: Vec<Vec<f64>>,
    transitions: Vec<DMatrix<f64>>,
}

fn initial_mass(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector, values: &[f64]) -> Result<Vec<f64>> {
    match model.initial_state(data, theta) {
        InitialState::Discrete(p) => {
            if p.len() != values.len() {
                return Err(SsmError::Config("initial mass does not match the state enumeration".into()));
            }
            Ok(p)
        }
        InitialState::Fixed(z) => {
            let k = values
                .iter()
                .position(|v| *v == z[0])
                .ok_or_else(|| SsmError::domain("z0", "initial state is not in the enumeration"))?;
            let mut p = vec![0.0; values.len()];
            p[k] = 1.0;
            Ok(p)
        }
        InitialState::Gaussian { .. } => Err(SsmError::Config("discrete-state models need a discrete initial law".into())),
    }
}

pub fn hmm_forward(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<HmmForward> {
    let values = model
        .discrete_states()
        .ok_or_else(|| SsmError::Config(format!("model `{}` is not a finite-state model", model.name())))?;
    model.check(data, theta)?;
    let k = values.len();
    let n = model.num_steps(data);
    let initial = initial_mass(model, data, theta, &values)?;
    let mut alpha = initial.clone();
    let mut out = HmmForward {
        loglik: 0.0,
        filtered: Vec::with_capacity(n),
        predicted: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
        initial,
        emissions: Vec::with_capacity(n),
        transitions: Vec::with_capacity(n),
    };
    for t in 0..n {
        let gamma = model
            .transition_matrix(data, t, theta)
            .ok_or_else(|| SsmError::Config("finite-state model lacks a transition matrix".into()))?;
        let pred: Vec<f64> = (0..k).map(|j| (0..k).map(|i| alpha[i] * gamma[(i, j)]).sum()).collect();
        let em: Vec<f64> = values
            .iter()
            .map(|&v| model.observation_log_density(data, t, &[v], theta).exp())
            .collect();
        let joint: Vec<f64> = pred.iter().zip(&em).map(|(p, e)| p * e).collect();
        let c: f64 = joint.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(SsmError::ImpossibleData {
                step: t,
                msg: "no state can produce this observation".into(),
            });
        }
        alpha = joint.iter().map(|v| v / c).collect();
        out.loglik += c.ln();
        out.scales.push(c);
        out.predicted.push(pred);
        out.filtered.push(alpha.clone());
        out.emissions.push(em);
        out.transitions.push(gamma);
    }
    Ok(out)
}

/// Smoothed state probabilities per step.
pub fn hmm_smooth(fwd: &HmmForward) -> Vec<Vec<f64>> {
    let n = fwd.filtered.len();
    if n == 0 {
        return Vec::new();
    }
    let k = fwd.initial.len();
    let mut beta = vec![1.0; k];
    let mut out = vec![Vec::new(); n];
    for t in (0..n).rev() {
        let mut g: Vec<f64> = fwd.filtered[t].iter().zip(&beta).map(|(a, b)| a * b).collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
        out[t] = g;
        if t > 0 {
            let gm = &fwd.transitions[t];
            let em = &fwd.emissions[t];
            beta = (0..k)
                .map(|i| (0..k).map(|j| gm[(i, j)] * em[j] * beta[j]).sum::<f64>() / fwd.scales[t])
                .collect();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{kalman_filter, kalman_smoother};
    use crate::model::{regular_template, simulate};
    use crate::zoo::{make_cjs, make_gompertz, make_ndlm, GompertzForm};
    use approx::assert_relative_eq;

    #[test]
    fn rejects_multivariate_states() {
        let m = crate::zoo::make_oucrw(1.0, 1.0, 0.1).unwrap();
        let th = m.spec().nominal();
        let d = regular_template(3, 1).unwrap();
        let g = StateGrid::new(-1.0, 1.0, 10).unwrap();
        assert!(matches!(grid_filter(&m, &d, &th, &g), Err(SsmError::Unsupported(_))));
    }

    #[test]
    fn toy_grid_matches_kalman() {
        let m = make_ndlm(1.0, 1.0, 0.1, 0.1, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(50, 1).unwrap(), 11).unwrap();
        let exact = kalman_filter(&m, &sim.data, &th).unwrap().loglik;
        let grid = StateGrid::auto(&m, &sim.data, &th, 400).unwrap();
        let g = grid_filter(&m, &sim.data, &th, &grid).unwrap();
        assert!((g.loglik - exact).abs() < 1e-4, "{} vs {}", g.loglik, exact);
    }

    #[test]
    fn gompertz_grid_matches_kalman() {
        let m = make_gompertz(0.5, -0.3, 0.2, 0.15, 1.2, GompertzForm::Linearized, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(40, 1).unwrap(), 3).unwrap();
        let exact = kalman_filter(&m, &sim.data, &th).unwrap().loglik;
        let grid = StateGrid::auto(&m, &sim.data, &th, 400).unwrap();
        let g = grid_filter(&m, &sim.data, &th, &grid).unwrap();
        assert!((g.loglik - exact).abs() < 1e-4);
    }

    #[test]
    fn grid_smoother_matches_rts() {
        let m = make_ndlm(1.0, 0.9, 0.3, 0.2, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(20, 1).unwrap(), 5).unwrap();
        let f = kalman_filter(&m, &sim.data, &th).unwrap();
        let s = kalman_smoother(&f).unwrap();
        let grid = StateGrid::auto(&m, &sim.data, &th, 400).unwrap();
        let g = grid_filter(&m, &sim.data, &th, &grid).unwrap();
        let gs = grid_means(&grid, &grid_smooth(&m, &sim.data, &th, &g));
        for t in 0..20 {
            assert!((gs[t] - s[t + 1].mean[0]).abs() < 1e-3);
        }
    }

    #[test]
    fn cjs_perfect_detection() {
        let m = make_cjs(0.7, 1.0, 0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(1.0); 5]).unwrap();
        let f = hmm_forward(&m, &d, &th).unwrap();
        assert_relative_eq!(f.loglik, 4.0 * 0.7f64.ln(), epsilon = 1e-12);
        let s = hmm_smooth(&f);
        assert!(s.iter().all(|p| (p[1] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cjs_zero_detection_is_impossible() {
        let m = make_cjs(0.7, 0.0, 0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(1.0), Some(0.0), Some(1.0)]).unwrap();
        assert!(matches!(hmm_forward(&m, &d, &th), Err(SsmError::ImpossibleData { step: 1, .. })));
    }

    #[test]
    fn smoothed_single_step_equals_filtered() {
        let m = make_cjs(0.6, 0.4, 0).unwrap();
        let th = m.spec().nominal();
        let d = TimeSeriesData::from_options(&[Some(1.0), Some(0.0)]).unwrap();
        let f = hmm_forward(&m, &d, &th).unwrap();
        assert_eq!(hmm_smooth(&f)[0], f.filtered[0]);
    }
}
