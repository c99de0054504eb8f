//! Constructors for the bundled models and JSON model configuration.

pub mod cjs;
pub mod dcrw;
pub mod ndlm;
pub mod oucrw;
pub mod population;

pub use cjs::{cjs_transition, first_captures, make_cjs, Cjs};
pub use dcrw::{interpolation_index, make_dcrw, Dcrw, DcrwErrorTable, ErrorClass};
pub use ndlm::{make_ndlm, make_product_ndlm, Ndlm};
pub use oucrw::{make_oucrw, oucrw_transition, OuCrw};
pub use population::{make_gompertz, make_logistic, Gompertz, GompertzForm, Logistic, LogisticScale};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, SsmError};
use crate::model::StateSpaceModel;
use crate::params::{ParamDef, Transform};

pub(crate) fn def(name: &str, transform: Transform, value: f64, fixed: bool) -> ParamDef {
    ParamDef { name: name.to_string(), transform, value, fixed }
}

pub(crate) fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let pad = if pad > 0.0 { pad } else { 1.0 };
    Some((lo - pad, hi + pad))
}

/// `{"model": "<name>", "params": {...}, "fixed": [...], "options": {...}}`.
///
/// `fixed`, when present, lists exactly the parameters held fixed; otherwise
/// each model's defaults apply.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub fixed: Option<Vec<String>>,
    #[serde(default)]
    pub options: Map<String, Value>,
}

pub const MODEL_NAMES: [&str; 10] = [
    "ndlm",
    "ndlm_product",
    "logistic",
    "logistic_log",
    "gompertz",
    "gompertz_linear",
    "dcrw",
    "oucrw",
    "cjs",
    "gompertz_covariate",
];

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SsmError::Config(format!("invalid model configuration: {e}")))
    }

    fn num(&self, name: &str, default: f64) -> Result<f64> {
        match self.params.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| SsmError::Config(format!("parameter `{name}` must be a number"))),
        }
    }

    fn opt_num(&self, name: &str) -> Result<Option<f64>> {
        match self.options.get(name) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| SsmError::Config(format!("option `{name}` must be a number"))),
        }
    }

    fn opt_str(&self, name: &str) -> Option<&str> {
        self.options.get(name).and_then(Value::as_str)
    }

    pub fn build(&self) -> Result<Box<dyn StateSpaceModel>> {
        let mut model: Box<dyn StateSpaceModel> = match self.model.as_str() {
            "ndlm" => Box::new(make_ndlm(
                self.num("alpha", 1.0)?,
                self.num("beta", 1.0)?,
                self.num("sigma_p", 0.1)?,
                self.num("sigma_o", 0.1)?,
                self.num("z0", 0.0)?,
            )?),
            "ndlm_product" => Box::new(make_product_ndlm(
                self.num("a", 1.0)?,
                self.num("b", 1.0)?,
                self.num("beta", 1.0)?,
                self.num("sigma_p", 0.1)?,
                self.num("sigma_o", 0.1)?,
                self.num("z0", 0.0)?,
            )?),
            "logistic" | "logistic_log" => Box::new(make_logistic(
                self.num("beta0", 0.1)?,
                self.num("beta1", -0.001)?,
                self.num("sigma_p", 0.1)?,
                self.num("sigma_o", 1.0)?,
                self.num("z0", 10.0)?,
                if self.model == "logistic" { LogisticScale::Natural } else { LogisticScale::LogState },
            )?),
            "gompertz" | "gompertz_linear" | "gompertz_covariate" => {
                let form = match self.opt_str("form") {
                    Some("raw") => GompertzForm::Raw,
                    Some("linearized") => GompertzForm::Linearized,
                    Some(other) => return Err(SsmError::Config(format!("unknown Gompertz form `{other}`"))),
                    None if self.model == "gompertz" => GompertzForm::Raw,
                    None => GompertzForm::Linearized,
                };
                let cov_name = self.opt_str("covariate");
                if self.model == "gompertz_covariate" && cov_name.is_none() {
                    return Err(SsmError::Config("gompertz_covariate needs options.covariate".into()));
                }
                let beta2 = self.num("beta2", 0.0)?;
                Box::new(make_gompertz(
                    self.num("beta0", 0.5)?,
                    self.num("beta1", -0.2)?,
                    self.num("sigma_p", 0.1)?,
                    self.num("sigma_o", 0.1)?,
                    self.num("w0", 0.0)?,
                    form,
                    cov_name.map(|n| (n, beta2)),
                )?)
            }
            "dcrw" => {
                let interval = self.opt_num("grid_interval")?.ok_or_else(|| {
                    SsmError::Config("dcrw requires options.grid_interval (no default is assumed)".into())
                })?;
                let table = match self.options.get("error_table") {
                    Some(v) => serde_json::from_value::<DcrwErrorTable>(v.clone())
                        .map_err(|e| SsmError::Config(format!("invalid error_table: {e}")))?,
                    None => DcrwErrorTable::placeholder(),
                };
                let mut m = make_dcrw(
                    self.num("gamma", 0.5)?,
                    self.num("sigma_lon", 0.1)?,
                    self.num("sigma_lat", 0.1)?,
                    self.num("rho", 0.0)?,
                    table,
                    interval,
                )?;
                for n in ["psi_lon", "psi_lat", "lon0", "lat0"] {
                    if let Some(v) = self.params.get(n).and_then(Value::as_f64) {
                        m.spec_mut().set_value(n, v)?;
                    }
                }
                Box::new(m)
            }
            "oucrw" => {
                let mut m = make_oucrw(self.num("beta", 1.0)?, self.num("sigma", 1.0)?, self.num("sigma_o", 0.1)?)?;
                m.spec_mut().set_value("mu0", self.num("mu0", 0.0)?)?;
                m.spec_mut().set_value("v0", self.num("v0", 0.0)?)?;
                Box::new(m)
            }
            "cjs" => {
                let first = self.opt_num("first_capture")?.unwrap_or(0.0);
                if first < 0.0 || first.fract() != 0.0 {
                    return Err(SsmError::Config("options.first_capture must be a non-negative integer".into()));
                }
                Box::new(make_cjs(self.num("phi", 0.8)?, self.num("p", 0.5)?, first as usize)?)
            }
            other => {
                return Err(SsmError::Config(format!(
                    "unknown model `{other}`; expected one of {}",
                    MODEL_NAMES.join(", ")
                )))
            }
        };
        for name in self.params.keys() {
            if model.spec().index_of(name).is_none() {
                return Err(SsmError::Config(format!("model `{}` has no parameter `{name}`", self.model)));
            }
        }
        if let Some(fixed) = &self.fixed {
            let spec = model.spec_mut();
            for n in spec.names() {
                spec.free(&n)?;
            }
            for n in fixed {
                let v = spec.nominal().get(n).ok_or_else(|| SsmError::Config(format!("cannot fix unknown parameter `{n}`")))?;
                spec.fix(n, v)?;
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_ndlm_from_json() {
        let cfg = ModelConfig::from_json(
            r#"{"model":"ndlm","params":{"sigma_p":0.2},"fixed":["alpha","beta","z0"]}"#,
        )
        .unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.spec().free_names(), vec!["sigma_p", "sigma_o"]);
        assert_eq!(m.spec().nominal().get("sigma_p"), Some(0.2));
    }

    #[test]
    fn unknown_model_and_parameter() {
        assert!(ModelConfig::from_json(r#"{"model":"nope"}"#).unwrap().build().is_err());
        assert!(ModelConfig::from_json(r#"{"model":"ndlm","params":{"zz":1}}"#).unwrap().build().is_err());
    }

    #[test]
    fn dcrw_needs_grid_interval() {
        let cfg = ModelConfig::from_json(r#"{"model":"dcrw"}"#).unwrap();
        assert!(matches!(cfg.build(), Err(SsmError::Config(_))));
        let cfg = ModelConfig::from_json(r#"{"model":"dcrw","options":{"grid_interval":1.0}}"#).unwrap();
        assert!(cfg.build().is_ok());
    }
}
