//! Derivative-free minimisation and finite-difference curvature.

use nalgebra::DMatrix;

use crate::error::{Result, SsmError};

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Simplex diameter tolerance, relative to `1 + |x|`.
    pub x_tol: f64,
    /// Spread of objective values across the simplex, relative to `1 + |f|`.
    pub f_tol: f64,
    /// Initial edge length, scaled by `max(1, |x_i|)`.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, x_tol: 1e-9, f_tol: 1e-12, initial_step: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best point after each iteration.
    pub trace: Vec<(Vec<f64>, f64)>,
}

/// Nelder–Mead minimisation. Infinite or NaN objective values act as a barrier.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Result<OptimResult> {
    let n = x0.len();
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let f0 = clean(f(x0));
    if !f0.is_finite() {
        return Err(SsmError::numerical(0, "objective is not finite at the starting point"));
    }
    let mut evals = 1;
    if n == 0 {
        return Ok(OptimResult { x: vec![], f: f0, iterations: 0, evaluations: 1, converged: true, trace: vec![(vec![], f0)] });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step * x0[i].abs().max(1.0);
        let v = clean(f(&x));
        evals += 1;
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].clone());
        let best = &simplex[0];
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = best.0.iter().map(|v| v.abs()).fold(0.0, f64::max) + 1.0;
        let spread = simplex[n].1 - best.1;
        if diam <= opts.x_tol * scale && spread.is_finite() && spread <= opts.f_tol * (1.0 + best.1.abs()) {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for k in 0..n {
                centroid[k] += x[k] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect() };
        let xr = along(-alpha);
        let fr = clean(f(&xr));
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-alpha * gamma);
            let fe = clean(f(&xe));
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(-alpha * rho);
            let v = clean(f(&x));
            (x, v)
        } else {
            let x = along(rho);
            let v = clean(f(&x));
            (x, v)
        };
        evals += 1;
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let b = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = item.0.iter().zip(&b).map(|(xi, bi)| bi + sigma * (xi - bi)).collect();
            let v = clean(f(&x));
            *item = (x, v);
        }
        evals += n;
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fbest) = simplex.swap_remove(0);
    Ok(OptimResult { x, f: fbest, iterations, evaluations: evals, converged, trace })
}

/// Default central-difference step for coordinate `v`.
pub fn fd_step(v: f64) -> f64 {
    1e-4 * v.abs().max(1.0)
}

/// Central-difference Hessian, symmetrized.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: Option<&[f64]>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let h: Vec<f64> = match step {
        Some(s) => s.to_vec(),
        None => x.iter().map(|v| fd_step(*v)).collect(),
    };
    let f0 = f(x);
    let mut m = DMatrix::zeros(n, n);
    let mut xe = x.to_vec();
    let eval = |xe: &[f64]| -> Result<f64> {
        let v = f(xe);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SsmError::numerical(0, "objective not finite inside the finite-difference stencil"))
        }
    };
    if !f0.is_finite() {
        return Err(SsmError::numerical(0, "objective not finite at the Hessian point"));
    }
    for i in 0..n {
        xe[i] = x[i] + h[i];
        let fp = eval(&xe)?;
        xe[i] = x[i] - h[i];
        let fm = eval(&xe)?;
        xe[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut acc = 0.0;
            for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                xe[i] = x[i] + si * h[i];
                xe[j] = x[j] + sj * h[j];
                acc += w * eval(&xe)?;
            }
            xe[i] = x[i];
            xe[j] = x[j];
            let v = acc / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}
