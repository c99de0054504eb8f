//! Parameter specifications, bijective transforms and natural-scale vectors.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Result, SsmError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    Logit { lower: f64, upper: f64 },
}

impl Transform {
    pub fn logit(lower: f64, upper: f64) -> Self {
        Transform::Logit { lower, upper }
    }

    /// Open support required of free values.
    pub fn in_support(&self, v: f64) -> bool {
        match *self {
            Transform::Identity => v.is_finite(),
            Transform::Log => v.is_finite() && v > 0.0,
            Transform::Logit { lower, upper } => v > lower && v < upper,
        }
    }

    /// Closed support, acceptable for fixed values (e.g. a noise scale fixed at 0).
    pub fn in_closure(&self, v: f64) -> bool {
        match *self {
            Transform::Identity => v.is_finite(),
            Transform::Log => v.is_finite() && v >= 0.0,
            Transform::Logit { lower, upper } => v >= lower && v <= upper,
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        match *self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Logit { lower, upper } => ((v - lower) / (upper - v)).ln(),
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Logit { lower, upper } => {
                let s = if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                };
                lower + (upper - lower) * s
            }
        }
    }

    /// dθ/dx at unconstrained point x.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::Log => x.exp(),
            Transform::Logit { lower, upper } => {
                let s = 1.0 / (1.0 + (-x).exp());
                (upper - lower) * s * (1.0 - s)
            }
        }
    }

    /// log |dθ/dx|, the change-of-variables term for densities on the free scale.
    pub fn log_jacobian(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Log => x,
            Transform::Logit { lower, upper } => {
                // log s + log(1-s) computed stably
                let a = -x.abs();
                (upper - lower).ln() + a - 2.0 * (1.0 + a.exp()).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    pub transform: Transform,
    /// Nominal value: the fixed value when `fixed`, otherwise a default start.
    pub value: f64,
    pub fixed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    defs: Vec<ParamDef>,
}

impl ParameterSpec {
    pub fn new(defs: Vec<ParamDef>) -> Result<Self> {
        for (i, d) in defs.iter().enumerate() {
            if defs[..i].iter().any(|e| e.name == d.name) {
                return Err(SsmError::Config(format!("duplicate parameter name `{}`", d.name)));
            }
            if let Transform::Logit { lower, upper } = d.transform {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(SsmError::Config(format!(
                        "parameter `{}`: logit bounds must be finite with lower < upper",
                        d.name
                    )));
                }
            }
            if !d.transform.in_closure(d.value) {
                return Err(SsmError::domain(&d.name, format!("value {} outside support", d.value)));
            }
        }
        Ok(Self { defs })
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.defs.iter().map(|d| d.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| SsmError::Config(format!("unknown parameter `{name}`")))
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.defs.len()).filter(|&i| !self.defs[i].fixed).collect()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_indices().into_iter().map(|i| self.defs[i].name.clone()).collect()
    }

    pub fn n_free(&self) -> usize {
        self.defs.iter().filter(|d| !d.fixed).count()
    }

    /// Fix `name` at `value`.
    pub fn fix(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.require(name)?;
        if !self.defs[i].transform.in_closure(value) {
            return Err(SsmError::domain(name, format!("value {value} outside support")));
        }
        self.defs[i].value = value;
        self.defs[i].fixed = true;
        Ok(())
    }

    pub fn free(&mut self, name: &str) -> Result<()> {
        let i = self.require(name)?;
        self.defs[i].fixed = false;
        Ok(())
    }

    pub fn set_value(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.require(name)?;
        if !self.defs[i].transform.in_closure(value) {
            return Err(SsmError::domain(name, format!("value {value} outside support")));
        }
        self.defs[i].value = value;
        Ok(())
    }

    pub fn nominal(&self) -> ParamVector {
        ParamVector::new(
            self.names(),
            self.defs.iter().map(|d| d.value).collect(),
        )
    }

    /// Check all values of `theta` against the support; free values must be interior.
    pub fn validate(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.defs.len() {
            return Err(SsmError::Config(format!(
                "parameter vector has {} entries, model expects {}",
                theta.len(),
                self.defs.len()
            )));
        }
        for (d, &v) in self.defs.iter().zip(theta.values()) {
            if !d.transform.in_closure(v) {
                return Err(SsmError::domain(&d.name, format!("value {v} outside support")));
            }
        }
        Ok(())
    }

    pub fn to_unconstrained(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        self.validate(theta)?;
        let mut out = Vec::with_capacity(self.n_free());
        for (d, &v) in self.defs.iter().zip(theta.values()) {
            if d.fixed {
                continue;
            }
            if !d.transform.in_support(v) {
                return Err(SsmError::domain(
                    &d.name,
                    format!("value {v} on the boundary or outside the support of a free parameter"),
                ));
            }
            out.push(d.transform.forward(v));
        }
        Ok(out)
    }

    /// Natural-scale vector from free coordinates; fixed entries take their spec values.
    pub fn from_unconstrained(&self, x: &[f64]) -> Result<ParamVector> {
        self.from_unconstrained_with(&self.nominal(), x)
    }

    /// As `from_unconstrained` but fixed entries are copied from `base`.
    pub fn from_unconstrained_with(&self, base: &ParamVector, x: &[f64]) -> Result<ParamVector> {
        if x.len() != self.n_free() {
            return Err(SsmError::Config(format!(
                "expected {} free coordinates, got {}",
                self.n_free(),
                x.len()
            )));
        }
        if base.len() != self.defs.len() {
            return Err(SsmError::Config("base parameter vector does not match the parameter specification".into()));
        }
        let mut values = base.values().to_vec();
        let mut k = 0;
        for (i, d) in self.defs.iter().enumerate() {
            if d.fixed {
                continue;
            }
            let xi = x[k];
            k += 1;
            if !xi.is_finite() {
                return Err(SsmError::domain(&d.name, format!("non-finite unconstrained value {xi}")));
            }
            values[i] = d.transform.inverse(xi);
        }
        Ok(ParamVector {
            names: base.names.clone(),
            values,
        })
    }

    /// Σ log |dθ/dx| over free coordinates.
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        self.free_indices()
            .iter()
            .zip(x)
            .map(|(&i, &xi)| self.defs[i].transform.log_jacobian(xi))
            .sum()
    }

    /// dθ/dx for each free coordinate.
    pub fn derivatives(&self, x: &[f64]) -> Vec<f64> {
        self.free_indices()
            .iter()
            .zip(x)
            .map(|(&i, &xi)| self.defs[i].transform.derivative(xi))
            .collect()
    }
}

/// Natural-scale parameter values keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    names: Arc<[String]>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(names.len(), values.len());
        Self {
            names: names.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.names.iter().position(|n| n == name) {
            Some(i) => {
                self.values[i] = value;
                Ok(())
            }
            None => Err(SsmError::Config(format!("unknown parameter `{name}`"))),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self> {
        self.set(name, value)?;
        Ok(self)
    }

    pub fn to_map(&self) -> serde_json::Map<String, serde_json::Value> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> ParameterSpec {
        ParameterSpec::new(vec![
            ParamDef { name: "mu".into(), transform: Transform::Identity, value: 2.5, fixed: false },
            ParamDef { name: "sigma".into(), transform: Transform::Log, value: 1.0, fixed: false },
            ParamDef { name: "gamma".into(), transform: Transform::logit(0.0, 1.0), value: 0.5, fixed: false },
            ParamDef { name: "rho".into(), transform: Transform::logit(-1.0, 1.0), value: 0.0, fixed: true },
        ])
        .unwrap()
    }

    #[test]
    fn trivial_maps() {
        let s = spec();
        let x = s.to_unconstrained(&s.nominal()).unwrap();
        assert_eq!(x, vec![2.5, 0.0, 0.0]);
        let back = s.from_unconstrained(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(back.get("sigma"), Some(1.0));
        assert_eq!(back.get("gamma"), Some(0.5));
        assert_eq!(back.get("rho"), Some(0.0));
    }

    #[test]
    fn inverse_logit_tends_to_upper() {
        let t = Transform::logit(0.0, 1.0);
        let mut prev = 0.0;
        for x in [1.0, 5.0, 10.0, 20.0, 40.0] {
            let v = t.inverse(x);
            assert!(v > prev && v <= 1.0);
            prev = v;
        }
        assert!(1.0 - t.inverse(40.0) < 1e-15);
    }

    #[test]
    fn out_of_support_names_parameter() {
        let s = spec();
        let mut th = s.nominal();
        th.set("sigma", -1.0).unwrap();
        match s.to_unconstrained(&th) {
            Err(SsmError::Domain { param, .. }) => assert_eq!(param, "sigma"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            s.from_unconstrained(&[f64::NAN, 0.0, 0.0]),
            Err(SsmError::Domain { .. })
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let d = ParamDef { name: "a".into(), transform: Transform::Identity, value: 0.0, fixed: false };
        assert!(ParameterSpec::new(vec![d.clone(), d]).is_err());
    }

    #[test]
    fn log_jacobian_matches_fd() {
        for t in [Transform::Log, Transform::logit(-2.0, 3.0)] {
            for x in [-3.0, -0.4, 0.0, 1.7, 6.0] {
                let h = 1e-6;
                let fd = (t.inverse(x + h) - t.inverse(x - h)) / (2.0 * h);
                assert!((t.log_jacobian(x) - fd.ln()).abs() < 1e-6);
                assert!((t.derivative(x) - fd).abs() < 1e-6 * fd.max(1.0));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn free_round_trip(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let s = spec();
            let th = s.from_unconstrained(&[a, b, c]).unwrap();
            let x = s.to_unconstrained(&th).unwrap();
            for (u, v) in [a, b, c].iter().zip(&x) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }

        #[test]
        fn natural_round_trip(m in -100.0f64..100.0, s in 1e-3f64..1e3, g in 0.001f64..0.999) {
            let sp = spec();
            let th = ParamVector::new(sp.names(), vec![m, s, g, 0.0]);
            let back = sp.from_unconstrained(&sp.to_unconstrained(&th).unwrap()).unwrap();
            for (u, v) in th.values().iter().zip(back.values()) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }
}
