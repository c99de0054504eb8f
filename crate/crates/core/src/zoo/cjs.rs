//! Cormack-Jolly-Seber survival model for one individual as a two-state HMM.
//!
//! States: 0 = dead, 1 = alive. The individual is alive at first capture;
//! occasions after it are the modelled steps.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use super::def;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{InitialState, StateSpaceModel};
use crate::params::{ParamVector, ParameterSpec, Transform};

#[derive(Clone, Debug)]
pub struct Cjs {
    spec: ParameterSpec,
    first: usize,
}

/// Parameters `phi` (survival) and `p` (detection); `first_capture` is the
/// 0-based occasion of first capture in the individual's history.
pub fn make_cjs(phi: f64, p: f64, first_capture: usize) -> Result<Cjs> {
    for (n, v) in [("phi", phi), ("p", p)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SsmError::domain(n, "must lie in [0, 1]"));
        }
    }
    Ok(Cjs {
        spec: ParameterSpec::new(vec![
            def("phi", Transform::logit(0.0, 1.0), phi, false),
            def("p", Transform::logit(0.0, 1.0), p, false),
        ])?,
        first: first_capture,
    })
}

/// Transition matrix `[[1, 0], [1 - φ, φ]]`.
pub fn cjs_transition(phi: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0 - phi, phi])
}

impl Cjs {
    pub fn first_capture(&self) -> usize {
        self.first
    }

    fn record_index(&self, t: usize) -> usize {
        self.first + 1 + t
    }
}

impl StateSpaceModel for Cjs {
    fn name(&self) -> &str {
        "cjs"
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
        if data.obs_dim() != 1 {
            return Err(SsmError::Data("capture histories are univariate".into()));
        }
        if self.first >= data.len() {
            return Err(SsmError::Data("first capture lies beyond the history".into()));
        }
        if data.y(self.first).is_some_and(|y| y != 1.0) {
            return Err(SsmError::Data("history must record a capture at the first-capture occasion".into()));
        }
        if data.y_column().iter().flatten().any(|&y| y != 0.0 && y != 1.0) {
            return Err(SsmError::Data("capture histories hold only 0 and 1".into()));
        }
        Ok(())
    }

    fn num_steps(&self, data: &TimeSeriesData) -> usize {
        data.len().saturating_sub(self.first + 1)
    }

    fn observed_at(&self, data: &TimeSeriesData, t: usize) -> bool {
        data.any_observed(self.record_index(t))
    }

    fn initial_state(&self, _data: &TimeSeriesData, _theta: &ParamVector) -> InitialState {
        InitialState::Discrete(vec![0.0, 1.0])
    }

    fn process_log_density(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        let g = cjs_transition(theta[0]);
        g[(prev[0] as usize, z[0] as usize)].ln()
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        match data.y(self.record_index(t)) {
            None => 0.0,
            Some(y) => {
                let q = theta[1] * z[0];
                if y == 1.0 {
                    q.ln()
                } else {
                    (1.0 - q).ln()
                }
            }
        }
    }

    fn sample_process(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random();
        vec![if prev[0] == 1.0 && u < theta[0] { 1.0 } else { 0.0 }]
    }

    fn sample_observation(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random();
        vec![if u < theta[1] * z[0] { 1.0 } else { 0.0 }]
    }

    fn write_observations(
        &self,
        template: &TimeSeriesData,
        t: usize,
        z: &[f64],
        theta: &ParamVector,
        rng: &mut dyn RngCore,
        out: &mut TimeSeriesData,
    ) {
        let i = self.record_index(t);
        let y = self.sample_observation(template, t, z, theta, rng)[0];
        if template.y(i).is_some() {
            out.set_record(i, vec![Some(y)]);
        }
    }

    fn discrete_states(&self) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0])
    }

    fn transition_matrix(&self, _d: &TimeSeriesData, _t: usize, theta: &ParamVector) -> Option<DMatrix<f64>> {
        Some(cjs_transition(theta[0]))
    }

    fn observation_moments(&self, _d: &TimeSeriesData, _t: usize, z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let q = theta[1] * z[0];
        Some((vec![q], vec![q * (1.0 - q)]))
    }

    fn time_homogeneous(&self) -> bool {
        true
    }
}

/// Capture histories for several individuals, each starting at its first capture.
pub fn first_captures(histories: &[Vec<u8>]) -> Result<Vec<usize>> {
    histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            h.iter()
                .position(|&y| y == 1)
                .ok_or_else(|| SsmError::Data(format!("individual {i} was never captured")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_survival_is_identity() {
        assert_eq!(cjs_transition(1.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn dead_is_absorbing() {
        let g = cjs_transition(0.37);
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g[(0, 1)], 0.0);
        for r in 0..2 {
            assert!((g.row(r).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn history_validation() {
        let m = make_cjs(0.8, 0.5, 1).unwrap();
        let th = m.spec().nominal();
        let bad = TimeSeriesData::from_options(&[Some(0.0), Some(0.0), Some(1.0)]).unwrap();
        assert!(m.check(&bad, &th).is_err());
        let good = TimeSeriesData::from_options(&[Some(0.0), Some(1.0), Some(1.0)]).unwrap();
        assert!(m.check(&good, &th).is_ok());
        assert_eq!(m.num_steps(&good), 1);
        assert!(make_cjs(1.2, 0.5, 0).is_err());
    }
}
