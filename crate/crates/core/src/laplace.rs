//! Laplace approximation of the marginal likelihood.
//!
//! The joint log-density is maximised over the latent states by Newton
//! iterations that exploit the banded curvature of a Markov chain; the
//! marginal is then `log p(y, ẑ) + (n/2) log 2π − ½ log det(−H)`.

use nalgebra::{DMatrix, DVector};

use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::model::{InitialState, LinearGaussianStep, StateSpaceModel};
use crate::params::ParamVector;
use crate::stats::LN_2PI;

/// Symmetric band matrix stored by its lower band.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            None
        } else {
            Some(i * (self.bw + 1) + (i - j))
        }
    }

    /// Add `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside the band");
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn add_diagonal(&mut self, a: f64) {
        for i in 0..self.n {
            self.data[i * (self.bw + 1)] += a;
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * (self.bw + 1)].abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Banded Cholesky factor; `None` unless positive definite.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = vec![0.0; n * (bw + 1)];
        let at = |l: &Vec<f64>, i: usize, j: usize| l[i * (bw + 1) + (i - j)];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.get(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= at(&l, i, k) * at(&l, j, k);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * (bw + 1)] = s.sqrt();
                } else {
                    l[i * (bw + 1) + (i - j)] = s / at(&l, j, j);
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }
}

#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (i - j)]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + self.bw + 1).min(n) {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }
}

/// Joint log-density over a latent vector with banded curvature.
pub trait LatentObjective {
    fn dim(&self) -> usize;
    fn bandwidth(&self) -> usize;
    fn log_joint(&self, x: &[f64]) -> f64;
    /// Gradient and Hessian of `log_joint`.
    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, BandMatrix);
    fn initial_guess(&self) -> Vec<f64>;
    /// State trajectory `z_0..z_T` implied by the latent vector.
    fn trajectory(&self, x: &[f64]) -> Vec<Vec<f64>>;
}

/// Central-difference gradient and Hessian of a small local function.
pub fn fd_local(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let f0 = f(x);
    let mut g = vec![0.0; n];
    let mut h = DMatrix::zeros(n, n);
    let hg: Vec<f64> = x.iter().map(|v| 1e-5 * (1.0 + v.abs())).collect();
    let hh: Vec<f64> = x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
    let mut xe = x.to_vec();
    for i in 0..n {
        xe[i] = x[i] + hg[i];
        let fp = f(&xe);
        xe[i] = x[i] - hg[i];
        let fm = f(&xe);
        g[i] = (fp - fm) / (2.0 * hg[i]);
        xe[i] = x[i] + hh[i];
        let fp = f(&xe);
        xe[i] = x[i] - hh[i];
        let fm = f(&xe);
        xe[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hh[i] * hh[i]);
    }
    for i in 0..n {
        for j in 0..i {
            let mut v = 0.0;
            for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                xe[i] = x[i] + si * hh[i];
                xe[j] = x[j] + sj * hh[j];
                v += w * f(&xe);
            }
            xe[i] = x[i];
            xe[j] = x[j];
            let d = v / (4.0 * hh[i] * hh[j]);
            h[(i, j)] = d;
            h[(j, i)] = d;
        }
    }
    (g, h)
}

/// Latent states of a generic first-order Markov model.
pub struct MarkovLatent<'a> {
    model: &'a dyn StateSpaceModel,
    data: &'a TimeSeriesData,
    theta: &'a ParamVector,
    d: usize,
    steps: usize,
    z0: Option<Vec<f64>>,
    prior: Option<(DVector<f64>, DMatrix<f64>)>,
    lg: Option<Vec<LinearGaussianStep>>,
}

impl<'a> MarkovLatent<'a> {
    pub fn new(model: &'a dyn StateSpaceModel, data: &'a TimeSeriesData, theta: &'a ParamVector) -> Result<Self> {
        if model.discrete_states().is_some() {
            return Err(SsmError::Config(
                "the Laplace approximation needs continuous states; use the HMM forward algorithm".into(),
            ));
        }
        model.check(data, theta)?;
        let steps = model.num_steps(data);
        let (z0, prior) = match model.initial_state(data, theta) {
            InitialState::Fixed(z) => (Some(z), None),
            InitialState::Gaussian { mean, cov } => {
                let prec = cov
                    .clone()
                    .cholesky()
                    .ok_or_else(|| SsmError::Config("Laplace needs a positive-definite initial covariance".into()))?
                    .inverse();
                (None, Some((mean, prec)))
            }
            InitialState::Discrete(_) => unreachable!(),
        };
        let lg = (0..steps).map(|t| model.linear_gaussian(data, t, theta)).collect::<Option<Vec<_>>>();
        Ok(Self { model, data, theta, d: model.state_dim(), steps, z0, prior, lg })
    }

    fn offset(&self) -> usize {
        if self.z0.is_some() {
            0
        } else {
            1
        }
    }

    /// Latent block index holding `z_k`, if `z_k` is latent.
    fn block(&self, k: usize) -> Option<usize> {
        if self.z0.is_some() {
            k.checked_sub(1)
        } else {
            Some(k)
        }
    }

    fn state<'b>(&'b self, x: &'b [f64], k: usize) -> &'b [f64] {
        match self.block(k) {
            Some(b) => &x[b * self.d..(b + 1) * self.d],
            None => self.z0.as_deref().unwrap(),
        }
    }

    fn add_local(&self, g: &mut [f64], h: &mut BandMatrix, blocks: &[Option<usize>], lg: &[f64], lh: &DMatrix<f64>) {
        let d = self.d;
        for (a, ba) in blocks.iter().enumerate() {
            let Some(ba) = ba else { continue };
            for i in 0..d {
                g[ba * d + i] += lg[a * d + i];
            }
            for (b, bb) in blocks.iter().enumerate() {
                let Some(bb) = bb else { continue };
                for i in 0..d {
                    for j in 0..d {
                        let (r, c) = (ba * d + i, bb * d + j);
                        if r >= c {
                            h.add(r, c, lh[(a * d + i, b * d + j)]);
                        }
                    }
                }
            }
        }
    }
}

fn lg_process_terms(lg: &LinearGaussianStep, prev: &[f64], z: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let d = z.len();
    let qinv = lg.state_cov.clone().cholesky()?.inverse();
    let r = DVector::from_column_slice(z) - &lg.transition * DVector::from_column_slice(prev) - &lg.offset;
    let qr = &qinv * &r;
    let ft = lg.transition.transpose();
    let mut g = vec![0.0; 2 * d];
    let gp = &ft * &qr;
    for i in 0..d {
        g[i] = gp[i];
        g[d + i] = -qr[i];
    }
    let mut h = DMatrix::zeros(2 * d, 2 * d);
    h.view_mut((0, 0), (d, d)).copy_from(&(-(&ft * &qinv * &lg.transition)));
    h.view_mut((0, d), (d, d)).copy_from(&(&ft * &qinv));
    h.view_mut((d, 0), (d, d)).copy_from(&(&qinv * &lg.transition));
    h.view_mut((d, d), (d, d)).copy_from(&(-&qinv));
    Some((g, h))
}

fn lg_observation_terms(lg: &LinearGaussianStep, data: &TimeSeriesData, t: usize, z: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let d = z.len();
    let rows: Vec<usize> = data.record(t).iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect();
    if rows.is_empty() {
        return Some((vec![0.0; d], DMatrix::zeros(d, d)));
    }
    let h = lg.obs_matrix.select_rows(&rows);
    let rinv = lg.obs_cov.select_rows(&rows).select_columns(&rows).cholesky()?.inverse();
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.record(t)[i].unwrap()));
    let v = y - &h * DVector::from_column_slice(z) - lg.obs_offset.select_rows(&rows);
    let g = h.transpose() * &rinv * v;
    let hess = -(h.transpose() * &rinv * &h);
    Some((g.iter().cloned().collect(), hess))
}

impl LatentObjective for MarkovLatent<'_> {
    fn dim(&self) -> usize {
        self.d * (self.steps + self.offset())
    }

    fn bandwidth(&self) -> usize {
        2 * self.d - 1
    }

    fn log_joint(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        if let Some((m, prec)) = &self.prior {
            let r = DVector::from_column_slice(self.state(x, 0)) - m;
            let logdet_prec: f64 = 2.0 * prec.clone().cholesky().map(|c| c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()).unwrap_or(f64::NAN);
            total += -0.5 * (self.d as f64 * LN_2PI - logdet_prec + r.dot(&(prec * &r)));
        }
        for t in 0..self.steps {
            let prev = self.state(x, t);
            let z = self.state(x, t + 1);
            total += self.model.process_log_density(self.data, t, prev, z, self.theta);
            total += self.model.observation_log_density(self.data, t, z, self.theta);
        }
        total
    }

    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, BandMatrix) {
        let n = self.dim();
        let d = self.d;
        let mut g = vec![0.0; n];
        let mut h = BandMatrix::zeros(n, self.bandwidth());
        if let Some((m, prec)) = &self.prior {
            let r = DVector::from_column_slice(self.state(x, 0)) - m;
            let pr = prec * r;
            let lh = -prec.clone();
            self.add_local(&mut g, &mut h, &[Some(0)], &(-pr).iter().cloned().collect::<Vec<_>>(), &lh);
        }
        for t in 0..self.steps {
            let prev = self.state(x, t).to_vec();
            let z = self.state(x, t + 1).to_vec();
            let blocks = [self.block(t), self.block(t + 1)];
            let lgs = self.lg.as_ref().map(|v| &v[t]);
            let proc = lgs.and_then(|lg| lg_process_terms(lg, &prev, &z)).unwrap_or_else(|| {
                let f = |v: &[f64]| self.model.process_log_density(self.data, t, &v[..d], &v[d..], self.theta);
                let mut both = prev.clone();
                both.extend_from_slice(&z);
                fd_local(&f, &both)
            });
            self.add_local(&mut g, &mut h, &blocks, &proc.0, &proc.1);
            if self.model.observed_at(self.data, t) {
                let obs = lgs.and_then(|lg| lg_observation_terms(lg, self.data, t, &z)).unwrap_or_else(|| {
                    let f = |v: &[f64]| self.model.observation_log_density(self.data, t, v, self.theta);
                    fd_local(&f, &z)
                });
                self.add_local(&mut g, &mut h, &[self.block(t + 1)], &obs.0, &obs.1);
            }
        }
        (g, h)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        let mut last: Vec<f64> = match (&self.z0, &self.prior) {
            (Some(z), _) => z.clone(),
            (None, Some((m, _))) => m.iter().cloned().collect(),
            _ => vec![0.0; self.d],
        };
        if self.z0.is_none() {
            x.extend_from_slice(&last);
        }
        for t in 0..self.steps {
            if let Some(b) = self.model.back_project(self.data, t, self.theta) {
                last = b;
            }
            x.extend_from_slice(&last);
        }
        x
    }

    fn trajectory(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..=self.steps).map(|k| self.state(x, k).to_vec()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LaplaceResult {
    /// Mode trajectory `z_0..z_T`.
    pub mode: Vec<Vec<f64>>,
    pub latent: Vec<f64>,
    /// Negative Hessian of the joint log-density at the mode.
    pub neg_hessian: BandMatrix,
    pub log_joint: f64,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_regularizations: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, max_regularizations: 20 }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Newton maximisation of a latent objective, then the Laplace marginal.
pub fn optimize_latent(obj: &dyn LatentObjective, init: Option<Vec<f64>>, opts: &InnerOptions) -> Result<LaplaceResult> {
    let n = obj.dim();
    let mut x = init.unwrap_or_else(|| obj.initial_guess());
    if x.len() != n {
        return Err(SsmError::Config(format!("initial latent vector has length {}, expected {n}", x.len())));
    }
    let mut f = obj.log_joint(&x);
    if !f.is_finite() {
        x = vec![0.0; n];
        f = obj.log_joint(&x);
        if !f.is_finite() {
            return Err(SsmError::ModeFinding("joint density is not finite at the starting states".into()));
        }
    }
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut stalled = false;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let (g, mut h) = obj.gradient_hessian(&x);
        grad_norm = inf_norm(&g);
        if grad_norm < opts.tol {
            break;
        }
        h.scale(-1.0);
        let mut chol = h.cholesky();
        let mut lambda = 0.0;
        let mut tries = 0;
        while chol.is_none() {
            if tries >= opts.max_regularizations {
                return Err(SsmError::ModeFinding(format!(
                    "curvature not positive definite after {tries} regularizations; the state posterior may be multimodal"
                )));
            }
            let base = 1e-6 * (1.0 + h.max_abs_diagonal());
            let next = if lambda == 0.0 { base } else { lambda * 4.0 };
            let mut hr = h.clone();
            hr.add_diagonal(next);
            lambda = next;
            chol = hr.cholesky();
            tries += 1;
        }
        let delta = chol.unwrap().solve(&g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            let fnew = obj.log_joint(&xn);
            if fnew.is_finite() && fnew >= f - 1e-12 * f.abs().max(1.0) {
                let gain = fnew - f;
                x = xn;
                f = fnew;
                accepted = true;
                if gain.abs() <= 1e-15 * f.abs().max(1.0) && step < 1.0 {
                    stalled = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalled {
            break;
        }
    }
    let (g, mut h) = obj.gradient_hessian(&x);
    let _ = grad_norm;
    let grad_norm = inf_norm(&g);
    if grad_norm > opts.tol.sqrt().max(1e-4) * (1.0 + f.abs()) {
        return Err(SsmError::ModeFinding(format!("inner optimisation stopped with gradient norm {grad_norm:.3e}")));
    }
    h.scale(-1.0);
    let chol = h.cholesky().ok_or_else(|| {
        SsmError::ModeFinding("negative Hessian at the mode is not positive definite; multimodality suspected".into())
    })?;
    let loglik = f + 0.5 * n as f64 * LN_2PI - 0.5 * chol.log_det();
    Ok(LaplaceResult {
        mode: obj.trajectory(&x),
        latent: x,
        neg_hessian: h,
        log_joint: f,
        loglik,
        grad_norm,
        iterations,
        converged: grad_norm < opts.tol,
    })
}

/// State mode and curvature for `model` at `theta`.
pub fn inner_mode(
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    theta: &ParamVector,
    z_init: Option<Vec<f64>>,
    opts: &InnerOptions,
) -> Result<LaplaceResult> {
    if let Some(custom) = model.laplace_objective(data, theta) {
        let obj = custom?;
        return optimize_latent(obj.as_ref(), z_init, opts);
    }
    let obj = MarkovLatent::new(model, data, theta)?;
    optimize_latent(&obj, z_init, opts)
}

pub fn laplace_marginal_loglik(model: &dyn StateSpaceModel, data: &TimeSeriesData, theta: &ParamVector) -> Result<f64> {
    Ok(inner_mode(model, data, theta, None, &InnerOptions::default())?.loglik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretized::{grid_filter, StateGrid};
    use crate::kalman::{kalman_filter, kalman_smoother};
    use crate::model::{regular_template, simulate};
    use crate::zoo::{make_gompertz, make_ndlm, make_oucrw, GompertzForm};
    use proptest::prelude::*;

    #[test]
    fn banded_logdet_matches_dense() {
        let n = 40;
        let bw = 3;
        let mut b = BandMatrix::zeros(n, bw);
        for i in 0..n {
            b.add(i, i, 4.0 + (i as f64).sin());
            for k in 1..=bw.min(i) {
                b.add(i, i - k, 0.3 * ((i * k) as f64).cos());
            }
        }
        let dense = b.to_dense();
        let chol = b.cholesky().unwrap();
        let dl = dense.clone().cholesky().unwrap();
        let want = 2.0 * dl.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((chol.log_det() - want).abs() < 1e-8);
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - 1.0).collect();
        let x = chol.solve(&rhs);
        let back = &dense * DVector::from_vec(x);
        for i in 0..n {
            assert!((back[i] - rhs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn mode_is_smoother_mean_for_gaussian_model() {
        let m = make_ndlm(1.0, 0.9, 0.2, 0.3, 0.5).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(30, 1).unwrap(), 2).unwrap();
        let s = kalman_smoother(&kalman_filter(&m, &sim.data, &th).unwrap()).unwrap();
        let r = inner_mode(&m, &sim.data, &th, Some(vec![5.0; 30]), &InnerOptions::default()).unwrap();
        for t in 1..=30 {
            assert!((r.mode[t][0] - s[t].mean[0]).abs() < 1e-8);
        }
        assert!(r.grad_norm < 1e-8);
    }

    #[test]
    fn oucrw_laplace_matches_kalman() {
        let mut m = make_oucrw(0.7, 1.1, 0.4).unwrap();
        m.spec_mut().set_value("v0", 0.3).unwrap();
        let th = m.spec().nominal();
        let times: Vec<f64> = (0..25).map(|i| i as f64 * 0.5 + 0.1 * (i as f64).sin()).collect();
        let tpl = crate::data::TimeSeriesData::univariate(times, &[0.0; 25]).unwrap();
        let sim = simulate(&m, &th, &tpl, 6).unwrap();
        let k = kalman_filter(&m, &sim.data, &th).unwrap().loglik;
        let l = laplace_marginal_loglik(&m, &sim.data, &th).unwrap();
        assert!((k - l).abs() < 1e-6, "{k} vs {l}");
    }

    #[test]
    fn precise_observations_pin_states() {
        let m = make_ndlm(1.0, 1.0, 0.5, 1e-6, 0.0).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(10, 1).unwrap(), 1).unwrap();
        let r = inner_mode(&m, &sim.data, &th, None, &InnerOptions::default()).unwrap();
        for t in 0..10 {
            assert!((r.mode[t + 1][0] - sim.data.y(t).unwrap()).abs() < 1e-9);
        }
    }

    fn raw_gompertz_gap(noise: f64) -> f64 {
        let m = make_gompertz(0.5, -0.3, noise, noise, 0.7, GompertzForm::Raw, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(50, 1).unwrap(), 8).unwrap();
        let grid = StateGrid::auto(&m, &sim.data, &th, 800).unwrap();
        let g = grid_filter(&m, &sim.data, &th, &grid).unwrap().loglik;
        let l = laplace_marginal_loglik(&m, &sim.data, &th).unwrap();
        (g - l).abs()
    }

    #[test]
    fn gompertz_raw_gap_shrinks_with_noise() {
        // states are lognormal on the natural scale, so the Gaussian
        // approximation carries an O(σ²) error per state
        let gaps: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&s| raw_gompertz_gap(s)).collect();
        assert!(gaps[0] < 0.5, "{gaps:?}");
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
        assert!(gaps[2] < 0.05, "{gaps:?}");
    }

    #[test]
    fn gompertz_linearized_laplace_is_exact() {
        let m = make_gompertz(0.5, -0.3, 0.1, 0.1, 0.7, GompertzForm::Linearized, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(50, 1).unwrap(), 8).unwrap();
        let k = kalman_filter(&m, &sim.data, &th).unwrap().loglik;
        let l = laplace_marginal_loglik(&m, &sim.data, &th).unwrap();
        assert!((k - l).abs() < 1e-6);
    }

    #[test]
    fn fd_gradient_at_mode_is_small() {
        let m = make_gompertz(0.5, -0.3, 0.2, 0.1, 0.7, GompertzForm::Raw, None).unwrap();
        let th = m.spec().nominal();
        let sim = simulate(&m, &th, &regular_template(20, 1).unwrap(), 4).unwrap();
        let r = inner_mode(&m, &sim.data, &th, None, &InnerOptions::default()).unwrap();
        let obj = MarkovLatent::new(&m, &sim.data, &th).unwrap();
        for i in 0..r.latent.len() {
            let h = 1e-6 * (1.0 + r.latent[i].abs());
            let mut xp = r.latent.clone();
            let mut xm = r.latent.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (obj.log_joint(&xp) - obj.log_joint(&xm)) / (2.0 * h);
            assert!(fd.abs() < 1e-4, "component {i}: {fd}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn exact_on_linear_gaussian(beta in 0.2f64..1.1, sp in 0.05f64..1.0, so in 0.05f64..1.0, alpha in 0.5f64..2.0, seed in 0u64..1000) {
            let m = make_ndlm(alpha, beta, sp, so, 0.3).unwrap();
            let th = m.spec().nominal();
            let sim = simulate(&m, &th, &regular_template(25, 1).unwrap(), seed).unwrap();
            let k = kalman_filter(&m, &sim.data, &th).unwrap().loglik;
            let l = laplace_marginal_loglik(&m, &sim.data, &th).unwrap();
            prop_assert!((k - l).abs() < 1e-6);
        }
    }
}
