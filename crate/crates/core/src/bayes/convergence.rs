use super::{tempered_metropolis, McmcOptions, PosteriorSamples, PriorSpec};
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::Backend;
use crate::model::StateSpaceModel;
use crate::rng::derive_seed;
use crate::stats::{mean, sample_variance};

pub const RHAT_THRESHOLD: f64 = 1.1;

/// Split-chain potential scale reduction factor per parameter.
pub fn gelman_rubin(samples: &PosteriorSamples) -> Result<Vec<f64>> {
    if samples.n_chains() < 2 {
        return Err(SsmError::Config("R-hat requires at least two chains".into()));
    }
    let n = samples.n_draws();
    if n < 10 {
        return Err(SsmError::Config("R-hat requires at least 10 retained draws per chain".into()));
    }
    let half = n / 2;
    Ok((0..samples.names.len())
        .map(|k| {
            let pieces: Vec<Vec<f64>> = samples
                .draws
                .iter()
                .flat_map(|c| {
                    let col: Vec<f64> = c.iter().map(|d| d[k]).collect();
                    // odd counts drop the middle draw
                    vec![col[..half].to_vec(), col[n - half..].to_vec()]
                })
                .collect();
            rhat(&pieces)
        })
        .collect())
}

fn rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_variance(c).unwrap_or(0.0)).collect::<Vec<_>>());
    let b = n * sample_variance(&means).unwrap_or(0.0);
    let var_plus = (n - 1.0) / n * w + b / n;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

#[derive(Clone, Debug)]
pub struct CloningReport {
    pub names: Vec<String>,
    pub ks: Vec<usize>,
    /// Posterior variance per K and parameter.
    pub variances: Vec<Vec<f64>>,
    /// var(K_last) / var(K_first) per parameter.
    pub ratios: Vec<f64>,
    /// Least-squares slope of log variance on log K per parameter; −1 for identifiable parameters.
    pub slopes: Vec<f64>,
    /// Whether every R̂ was below the threshold at each K.
    pub converged: Vec<bool>,
}

/// Posterior variance under K-fold cloned likelihoods.
pub fn data_cloning(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    priors: &PriorSpec,
    ks: &[usize],
    backend: &Backend,
    opts: &McmcOptions,
    seed: u64,
) -> Result<CloningReport> {
    if ks.is_empty() || ks[0] < 1 || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SsmError::Config("clone counts must be increasing and at least 1".into()));
    }
    let mut variances = Vec::new();
    let mut converged = Vec::new();
    let mut names = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let s = tempered_metropolis(model, data, priors, backend, opts, derive_seed(seed, &[i as u64]), k as f64)?;
        names = s.names.clone();
        variances.push((0..s.names.len()).map(|j| sample_variance(&s.column(j)).unwrap_or(f64::NAN)).collect::<Vec<_>>());
        converged.push(match gelman_rubin(&s) {
            Ok(r) => r.iter().all(|v| *v < RHAT_THRESHOLD),
            Err(_) => false,
        });
    }
    let p = names.len();
    let last = variances.len() - 1;
    let ratios = (0..p).map(|j| variances[last][j] / variances[0][j]).collect();
    let lk: Vec<f64> = ks.iter().map(|k| (*k as f64).ln()).collect();
    let slopes = (0..p)
        .map(|j| {
            if ks.len() < 2 {
                return f64::NAN;
            }
            let lv: Vec<f64> = variances.iter().map(|v| v[j].ln()).collect();
            let (mx, my) = (mean(&lk), mean(&lv));
            let sxy: f64 = lk.iter().zip(&lv).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = lk.iter().map(|x| (x - mx).powi(2)).sum();
            sxy / sxx
        })
        .collect();
    Ok(CloningReport { names, ks: ks.to_vec(), variances, ratios, slopes, converged })
}
