//! Rolling-origin and blocked k-fold cross-validation scored by MSPE.

use rayon::prelude::*;
use serde::Serialize;

use super::residuals::{one_step_predictive, require_aligned, smoothed_observation_means};
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::{fit_mle, Backend, FitOptions};
use crate::model::StateSpaceModel;
use crate::params::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvScheme {
    /// Fit on `y_1..y_t`, predict `y_{t+1}`, for `t = origin..T−1`; refit every `refit_every` origins.
    Rolling { origin: usize, refit_every: usize },
    /// Hold out each of `k` contiguous blocks, fit with it missing and predict it from the smoother.
    Block { k: usize },
}

impl CvScheme {
    pub fn rolling(origin: usize) -> Self {
        CvScheme::Rolling { origin, refit_every: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CvFold {
    /// Record indices scored in this fold.
    pub held_out: Vec<usize>,
    pub theta: Vec<f64>,
    /// `(record, coordinate, prediction, observation)`.
    pub predictions: Vec<(usize, usize, f64, f64)>,
    pub mspe: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub scheme: CvScheme,
    pub folds: Vec<CvFold>,
    /// Mean of the fold MSPEs over scored folds.
    pub mspe: f64,
    pub n_skipped: usize,
    pub warnings: Vec<String>,
}

fn fitted_theta(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    backend: &Backend,
    theta: &ParamVector,
    refit: Option<&FitOptions>,
) -> Result<ParamVector> {
    match refit {
        None => Ok(theta.clone()),
        Some(opts) => {
            let mut o = opts.clone();
            o.hessian = false;
            Ok(fit_mle(model, data, backend, Some(theta), &o)?.theta)
        }
    }
}

fn score(preds: &[(usize, usize, f64, f64)]) -> Option<f64> {
    (!preds.is_empty()).then(|| preds.iter().map(|p| (p.2 - p.3).powi(2)).sum::<f64>() / preds.len() as f64)
}

/// Cross-validated MSPE. With `refit = None` every fold uses `theta` as given.
pub fn cross_validate(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    scheme: CvScheme,
    backend: &Backend,
    theta: &ParamVector,
    refit: Option<&FitOptions>,
) -> Result<CvReport> {
    require_aligned(model, data)?;
    let n = data.len();
    let folds: Vec<CvFold> = match scheme {
        CvScheme::Rolling { origin, refit_every } => {
            if origin == 0 || origin >= n || refit_every == 0 {
                return Err(SsmError::Config(format!("rolling CV needs 1 ≤ origin < T = {n} and refit_every ≥ 1")));
            }
            let starts: Vec<usize> = (origin..n).step_by(refit_every).collect();
            let groups: Vec<Vec<CvFold>> = starts
                .par_iter()
                .map(|&g| -> Result<Vec<CvFold>> {
                    let th = fitted_theta(model, &data.head(g)?, backend, theta, refit)?;
                    (g..(g + refit_every).min(n))
                        .map(|t| {
                            let p = one_step_predictive(model, &data.head(t + 1)?, &th, backend)?;
                            let preds = data
                                .record(t)
                                .iter()
                                .enumerate()
                                .filter_map(|(c, y)| Some((t, c, p.mean[t][c]?, (*y)?)))
                                .collect::<Vec<_>>();
                            Ok(CvFold { held_out: vec![t], theta: th.values().to_vec(), mspe: score(&preds), predictions: preds })
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            groups.into_iter().flatten().collect()
        }
        CvScheme::Block { k } => {
            if k < 2 || k > n {
                return Err(SsmError::Config(format!("block CV needs 2 ≤ k ≤ T = {n}")));
            }
            (0..k)
                .into_par_iter()
                .map(|b| -> Result<CvFold> {
                    let rows: Vec<usize> = (b * n / k..(b + 1) * n / k).collect();
                    let masked = data.masked(rows.iter().cloned());
                    let th = fitted_theta(model, &masked, backend, theta, refit)?;
                    let fitted = smoothed_observation_means(model, &masked, &th, backend)?;
                    let preds = rows
                        .iter()
                        .flat_map(|&t| data.record(t).iter().enumerate().filter_map(move |(c, y)| y.map(|y| (t, c, y))))
                        .map(|(t, c, y)| (t, c, fitted[t][c], y))
                        .collect::<Vec<_>>();
                    Ok(CvFold { held_out: rows, theta: th.values().to_vec(), mspe: score(&preds), predictions: preds })
                })
                .collect::<Result<_>>()?
        }
    };
    let scored: Vec<f64> = folds.iter().filter_map(|f| f.mspe).collect();
    let n_skipped = folds.len() - scored.len();
    let mut warnings = Vec::new();
    if n_skipped > 0 {
        warnings.push(format!("{n_skipped} folds had nothing observed to predict and were skipped"));
    }
    if scored.is_empty() {
        return Err(SsmError::Data("no fold had an observation to predict".into()));
    }
    Ok(CvReport { scheme, folds, mspe: scored.iter().sum::<f64>() / scored.len() as f64, n_skipped, warnings })
}
