use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SsmError};
use crate::params::{ParamVector, ParameterSpec, Transform};
use crate::stats::{normal_logpdf, LN_2PI};

/// Prior law of one parameter on its natural scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Uniform { lower: f64, upper: f64 },
    HalfNormal { sd: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Normal { sd, .. } => sd > 0.0,
            Prior::Uniform { lower, upper } => lower < upper && lower.is_finite() && upper.is_finite(),
            Prior::HalfNormal { sd } => sd > 0.0,
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SsmError::Config(format!("improper prior hyperparameters: {self:?}")))
        }
    }

    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => normal_logpdf(v, mean, sd),
            Prior::Uniform { lower, upper } => {
                if v >= lower && v <= upper {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::HalfNormal { sd } => {
                if v >= 0.0 {
                    std::f64::consts::LN_2 - 0.5 * LN_2PI - sd.ln() - 0.5 * (v / sd).powi(2)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Gamma { shape, rate } => {
                if v > 0.0 {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * v.ln() - rate * v
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Priors for the free parameters, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub priors: BTreeMap<String, Prior>,
}

impl PriorSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, prior: Prior) -> Self {
        self.priors.insert(name.to_string(), prior);
        self
    }

    /// Weakly informative defaults: half-normal(1) for positive parameters,
    /// uniform on bounded intervals, normal(0, 10) otherwise.
    pub fn weakly_informative(spec: &ParameterSpec) -> Self {
        let mut out = Self::new();
        for i in spec.free_indices() {
            let d = &spec.defs()[i];
            let p = match d.transform {
                Transform::Log => Prior::HalfNormal { sd: 1.0 },
                Transform::Logit { lower, upper } => Prior::Uniform { lower, upper },
                Transform::Identity => Prior::Normal { mean: 0.0, sd: 10.0 },
            };
            out.priors.insert(d.name.clone(), p);
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let priors: BTreeMap<String, Prior> = serde_json::from_str(text)?;
        Ok(Self { priors })
    }

    /// Every free parameter needs a proper prior; unknown names are rejected.
    pub fn check(&self, spec: &ParameterSpec) -> Result<()> {
        for name in spec.free_names() {
            let p = self
                .priors
                .get(&name)
                .ok_or_else(|| SsmError::Config(format!("no prior given for free parameter `{name}`")))?;
            p.validate()?;
        }
        for name in self.priors.keys() {
            if spec.index_of(name).is_none() {
                return Err(SsmError::Config(format!("prior given for unknown parameter `{name}`")));
            }
        }
        Ok(())
    }

    /// Σ log π over free parameters at natural-scale values.
    pub fn log_density(&self, spec: &ParameterSpec, theta: &ParamVector) -> f64 {
        spec.free_names()
            .iter()
            .map(|n| self.priors.get(n).map_or(f64::NEG_INFINITY, |p| p.log_density(theta.get(n).unwrap())))
            .sum()
    }
}
