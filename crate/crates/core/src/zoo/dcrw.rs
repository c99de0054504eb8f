//! First-difference correlated random walk with t-distributed location errors.
//!
//! Locations live on a regular grid with spacing `grid_interval` starting at
//! the first observation time. The Markov state is the pair
//! `(x_t, x_{t-1})` of consecutive grid locations (lon, lat each).
//! Observation `i`, falling a fraction `j_i` of the way through its grid
//! interval, is centred on `(1 - j_i) x_{t-1} + j_i x_t`.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::def;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::laplace::{BandMatrix, LatentObjective};
use crate::model::{InitialState, StateSpaceModel};
use crate::params::{ParamVector, ParameterSpec, Transform};
use crate::stats::{student_t_logpdf, LN_2PI};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorClass {
    pub class: u8,
    pub scale_lon: f64,
    pub scale_lat: f64,
    pub df_lon: f64,
    pub df_lat: f64,
}

/// Per-quality-class t scales and degrees of freedom, plus starting values
/// for the correction factors `psi_lon`, `psi_lat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcrwErrorTable {
    pub classes: Vec<ErrorClass>,
    pub psi_lon: f64,
    pub psi_lat: f64,
}

impl DcrwErrorTable {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(SsmError::Config("error table has no classes".into()));
        }
        for c in &self.classes {
            if !(c.scale_lon > 0.0 && c.scale_lat > 0.0 && c.df_lon > 0.0 && c.df_lat > 0.0) {
                return Err(SsmError::Config(format!("error table class {}: scales and df must be positive", c.class)));
            }
        }
        if !(self.psi_lon > 0.0 && self.psi_lat > 0.0) {
            return Err(SsmError::Config("error table correction factors must be positive".into()));
        }
        Ok(())
    }

    pub fn class(&self, q: u8) -> Option<&ErrorClass> {
        self.classes.iter().find(|c| c.class == q)
    }

    /// Same scale and df for every class in `1..=6`.
    pub fn uniform(scale: f64, df: f64) -> Self {
        Self {
            classes: (1..=6)
                .map(|q| ErrorClass { class: q, scale_lon: scale, scale_lat: scale, df_lon: df, df_lat: df })
                .collect(),
            psi_lon: 1.0,
            psi_lat: 1.0,
        }
    }

    /// Illustrative table for classes 1..6 (best to worst). The numbers are
    /// not calibrated against any tag data; supply a measured table for real work.
    pub fn placeholder() -> Self {
        let rows = [
            (1, 0.3, 0.3, 30.0, 30.0),
            (2, 0.6, 0.6, 20.0, 20.0),
            (3, 1.5, 1.5, 10.0, 10.0),
            (4, 4.0, 4.0, 5.0, 5.0),
            (5, 8.0, 8.0, 3.0, 3.0),
            (6, 15.0, 15.0, 2.0, 2.0),
        ];
        Self {
            classes: rows
                .iter()
                .map(|&(class, scale_lon, scale_lat, df_lon, df_lat)| ErrorClass { class, scale_lon, scale_lat, df_lon, df_lat })
                .collect(),
            psi_lon: 1.0,
            psi_lat: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dcrw {
    spec: ParameterSpec,
    table: DcrwErrorTable,
    grid_interval: f64,
}

/// Parameters: `gamma, sigma_lon, sigma_lat, rho, psi_lon, psi_lat, lon0, lat0`.
/// `rho` starts fixed at its given value.
pub fn make_dcrw(gamma: f64, sigma_lon: f64, sigma_lat: f64, rho: f64, table: DcrwErrorTable, grid_interval: f64) -> Result<Dcrw> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(SsmError::domain("gamma", "must lie in [0, 1]"));
    }
    if !(grid_interval > 0.0) || !grid_interval.is_finite() {
        return Err(SsmError::Config("grid_interval must be positive".into()));
    }
    table.validate()?;
    let spec = ParameterSpec::new(vec![
        def("gamma", Transform::logit(0.0, 1.0), gamma, false),
        def("sigma_lon", Transform::Log, sigma_lon, false),
        def("sigma_lat", Transform::Log, sigma_lat, false),
        def("rho", Transform::logit(-1.0, 1.0), rho, true),
        def("psi_lon", Transform::Log, table.psi_lon, false),
        def("psi_lat", Transform::Log, table.psi_lat, false),
        def("lon0", Transform::Identity, 0.0, false),
        def("lat0", Transform::Identity, 0.0, false),
    ])?;
    Ok(Dcrw { spec, table, grid_interval })
}

/// Grid interval (0-based step) and fraction for one observation time.
fn locate(offset: f64, dt: f64) -> (usize, f64) {
    let mut k = offset / dt;
    if (k - k.round()).abs() < 1e-9 {
        k = k.round();
    }
    if k <= 0.0 {
        return (0, 0.0);
    }
    let step = (k.ceil() as usize).max(1) - 1;
    (step, k - step as f64)
}

/// `(t(i), j_i)` for every observation.
pub fn interpolation_index(data: &TimeSeriesData, grid_interval: f64) -> Vec<(usize, f64)> {
    let t0 = data.times()[0];
    data.times().iter().map(|&s| locate(s - t0, grid_interval)).collect()
}

impl Dcrw {
    pub fn grid_interval(&self) -> f64 {
        self.grid_interval
    }

    pub fn table(&self) -> &DcrwErrorTable {
        &self.table
    }

    /// Start the track at the first observed location.
    pub fn anchor_to(&mut self, data: &TimeSeriesData) -> Result<()> {
        let r = data.record(0);
        if let (Some(lon), Some(lat)) = (r[0], r[1]) {
            self.spec.set_value("lon0", lon)?;
            self.spec.set_value("lat0", lat)?;
        }
        Ok(())
    }

    fn step_of(&self, data: &TimeSeriesData, i: usize) -> usize {
        locate(data.times()[i] - data.times()[0], self.grid_interval).0
    }

    /// Observation indices attached to step `t`.
    fn obs_range(&self, data: &TimeSeriesData, t: usize) -> std::ops::Range<usize> {
        let n = data.len();
        let lo = partition(n, |i| self.step_of(data, i) < t);
        let hi = partition(n, |i| self.step_of(data, i) <= t);
        lo..hi
    }

    fn sigma(&self, theta: &ParamVector) -> (f64, f64, f64) {
        (theta[1], theta[2], theta[3])
    }

    fn obs_scales(&self, data: &TimeSeriesData, i: usize, theta: &ParamVector) -> [(f64, f64); 2] {
        let q = data.quality().map(|q| q[i]).unwrap_or(1);
        let c = self.table.class(q).expect("quality classes checked");
        [(theta[4] * c.scale_lon, c.df_lon), (theta[5] * c.scale_lat, c.df_lat)]
    }

    fn fraction(&self, data: &TimeSeriesData, i: usize) -> f64 {
        locate(data.times()[i] - data.times()[0], self.grid_interval).1
    }

    fn process_mean(&self, prev: &[f64], gamma: f64) -> [f64; 2] {
        [
            prev[0] + gamma * (prev[0] - prev[2]),
            prev[1] + gamma * (prev[1] - prev[3]),
        ]
    }

    fn precision(&self, theta: &ParamVector) -> ([[f64; 2]; 2], f64) {
        let (sl, sa, rho) = self.sigma(theta);
        let det = sl * sl * sa * sa * (1.0 - rho * rho);
        let inv = [
            [sa * sa / det, -rho * sl * sa / det],
            [-rho * sl * sa / det, sl * sl / det],
        ];
        (inv, det)
    }

    fn bvn_logpdf(&self, r: [f64; 2], theta: &ParamVector) -> f64 {
        let (p, det) = self.precision(theta);
        let q = r[0] * r[0] * p[0][0] + 2.0 * r[0] * r[1] * p[0][1] + r[1] * r[1] * p[1][1];
        -LN_2PI - 0.5 * det.ln() - 0.5 * q
    }
}

fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

impl StateSpaceModel for Dcrw {
    fn name(&self) -> &str {
        "dcrw"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn spec(&self) -> &ParameterSpec {
        &self.spec
    }
    fn spec_mut(&mut self) -> &mut ParameterSpec {
        &mut self.spec
    }

    fn check(&self, data: &TimeSeriesData, theta: &ParamVector) -> Result<()> {
        self.spec.validate(theta)?;
        if data.obs_dim() != 2 {
            return Err(SsmError::Data("DCRW expects two observation columns (lon, lat)".into()));
        }
        match data.quality() {
            Some(q) => {
                if let Some(bad) = q.iter().find(|&&c| self.table.class(c).is_none()) {
                    return Err(SsmError::Data(format!("quality class {bad} is not in the error table")));
                }
            }
            None => {
                if self.table.class(1).is_none() {
                    return Err(SsmError::Data("data carry no quality column and the error table lacks class 1".into()));
                }
            }
        }
        Ok(())
    }

    fn num_steps(&self, data: &TimeSeriesData) -> usize {
        self.step_of(data, data.len() - 1) + 1
    }

    fn observed_at(&self, data: &TimeSeriesData, t: usize) -> bool {
        self.obs_range(data, t).any(|i| data.any_observed(i))
    }

    fn initial_state(&self, _data: &TimeSeriesData, theta: &ParamVector) -> InitialState {
        InitialState::Fixed(vec![theta[6], theta[7], theta[6], theta[7]])
    }

    fn process_log_density(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> f64 {
        let m = self.process_mean(prev, theta[0]);
        self.bvn_logpdf([z[0] - m[0], z[1] - m[1]], theta)
    }

    fn observation_log_density(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector) -> f64 {
        let mut total = 0.0;
        for i in self.obs_range(data, t) {
            let j = self.fraction(data, i);
            let sc = self.obs_scales(data, i, theta);
            for c in 0..2 {
                if let Some(y) = data.record(i)[c] {
                    let mu = (1.0 - j) * z[2 + c] + j * z[c];
                    total += student_t_logpdf(y, mu, sc[c].0, sc[c].1);
                }
            }
        }
        total
    }

    fn sample_process(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let m = self.process_mean(prev, theta[0]);
        let (sl, sa, rho) = self.sigma(theta);
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        vec![
            m[0] + sl * e1,
            m[1] + sa * (rho * e1 + (1.0 - rho * rho).sqrt() * e2),
            prev[0],
            prev[1],
        ]
    }

    fn sample_observation(&self, data: &TimeSeriesData, t: usize, z: &[f64], theta: &ParamVector, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut scratch = data.clone();
        self.write_observations(data, t, z, theta, rng, &mut scratch);
        let i = self.obs_range(data, t).next().unwrap_or(0);
        scratch.record(i).iter().map(|v| v.unwrap_or(f64::NAN)).collect()
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
        for i in self.obs_range(template, t) {
            let j = self.fraction(template, i);
            let sc = self.obs_scales(template, i, theta);
            let mut rec = template.record(i).to_vec();
            for c in 0..2 {
                let draw: f64 = StudentT::new(sc[c].1).expect("positive df").sample(&mut *rng);
                if rec[c].is_some() {
                    rec[c] = Some((1.0 - j) * z[2 + c] + j * z[c] + sc[c].0 * draw);
                }
            }
            out.set_record(i, rec);
        }
    }

    fn process_noise(&self, _d: &TimeSeriesData, _t: usize, prev: &[f64], z: &[f64], theta: &ParamVector) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.process_mean(prev, theta[0]);
        Some((vec![z[0] - m[0], z[1] - m[1]], vec![theta[1], theta[2]]))
    }

    fn time_homogeneous(&self) -> bool {
        true
    }

    fn laplace_objective<'a>(&'a self, data: &'a TimeSeriesData, theta: &'a ParamVector) -> Option<Result<Box<dyn LatentObjective + 'a>>> {
        Some(self.check(data, theta).map(|_| Box::new(DcrwLatent { model: self, data, theta, steps: self.num_steps(data) }) as Box<dyn LatentObjective + 'a>))
    }
}

/// Latent vector `(x_1, ..., x_T)` of grid locations, two coordinates each.
struct DcrwLatent<'a> {
    model: &'a Dcrw,
    data: &'a TimeSeriesData,
    theta: &'a ParamVector,
    steps: usize,
}

impl DcrwLatent<'_> {
    fn loc(&self, x: &[f64], k: isize) -> [f64; 2] {
        if k <= 0 {
            [self.theta[6], self.theta[7]]
        } else {
            let b = 2 * (k as usize - 1);
            [x[b], x[b + 1]]
        }
    }
}

impl LatentObjective for DcrwLatent<'_> {
    fn dim(&self) -> usize {
        2 * self.steps
    }

    fn bandwidth(&self) -> usize {
        5
    }

    fn log_joint(&self, x: &[f64]) -> f64 {
        let traj = self.trajectory(x);
        let mut total = 0.0;
        for t in 0..self.steps {
            total += self.model.process_log_density(self.data, t, &traj[t], &traj[t + 1], self.theta);
            total += self.model.observation_log_density(self.data, t, &traj[t + 1], self.theta);
        }
        total
    }

    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, BandMatrix) {
        let n = self.dim();
        let mut g = vec![0.0; n];
        let mut h = BandMatrix::zeros(n, 5);
        let gamma = self.theta[0];
        let (p, _) = self.model.precision(self.theta);
        let coef = [1.0, -(1.0 + gamma), gamma];
        for t in 0..self.steps {
            // location index k = t + 1 follows k - 1 and k - 2
            let k = t as isize + 1;
            let (a, b, c) = (self.loc(x, k), self.loc(x, k - 1), self.loc(x, k - 2));
            let r = [
                a[0] - (1.0 + gamma) * b[0] + gamma * c[0],
                a[1] - (1.0 + gamma) * b[1] + gamma * c[1],
            ];
            let pr = [p[0][0] * r[0] + p[0][1] * r[1], p[1][0] * r[0] + p[1][1] * r[1]];
            for (u, &cu) in coef.iter().enumerate() {
                let ku = k - u as isize;
                if ku <= 0 {
                    continue;
                }
                let bu = 2 * (ku as usize - 1);
                g[bu] -= cu * pr[0];
                g[bu + 1] -= cu * pr[1];
                for (v, &cv) in coef.iter().enumerate() {
                    let kv = k - v as isize;
                    if kv <= 0 {
                        continue;
                    }
                    let bv = 2 * (kv as usize - 1);
                    for ci in 0..2 {
                        for cj in 0..2 {
                            if bu + ci >= bv + cj {
                                h.add(bu + ci, bv + cj, -cu * cv * p[ci][cj]);
                            }
                        }
                    }
                }
            }
            for i in self.model.obs_range(self.data, t) {
                let j = self.model.fraction(self.data, i);
                let sc = self.model.obs_scales(self.data, i, self.theta);
                for c in 0..2 {
                    let Some(y) = self.data.record(i)[c] else { continue };
                    let mu = (1.0 - j) * b[c] + j * a[c];
                    let (s, nu) = sc[c];
                    let u = y - mu;
                    let den = nu * s * s + u * u;
                    let d1 = (nu + 1.0) * u / den;
                    let d2 = (nu + 1.0) * (u * u - nu * s * s) / (den * den);
                    let w = [(k, j), (k - 1, 1.0 - j)];
                    for &(ka, wa) in &w {
                        if ka <= 0 || wa == 0.0 {
                            continue;
                        }
                        let ia = 2 * (ka as usize - 1) + c;
                        g[ia] += wa * d1;
                        for &(kb, wb) in &w {
                            if kb <= 0 || wb == 0.0 {
                                continue;
                            }
                            let ib = 2 * (kb as usize - 1) + c;
                            if ia >= ib {
                                h.add(ia, ib, wa * wb * d2);
                            }
                        }
                    }
                }
            }
        }
        (g, h)
    }

    fn initial_guess(&self) -> Vec<f64> {
        // nearest observation per grid step, carried forward when absent
        let mut x = Vec::with_capacity(self.dim());
        let mut last = [self.theta[6], self.theta[7]];
        for t in 0..self.steps {
            for i in self.model.obs_range(self.data, t) {
                let r = self.data.record(i);
                if let (Some(a), Some(b)) = (r[0], r[1]) {
                    last = [a, b];
                }
            }
            x.extend_from_slice(&last);
        }
        x
    }

    fn trajectory(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..=self.steps as isize)
            .map(|k| {
                let a = self.loc(x, k);
                let b = self.loc(x, k - 1);
                vec![a[0], a[1], b[0], b[1]]
            })
            .collect()
    }
}
