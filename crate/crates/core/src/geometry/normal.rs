//! Normal coordinates, geodesic shooting and the signed world function.

use super::geodesic::{GeodesicPath, GeodesicSample, JacobiRay};
use super::{GeometryError, SpacetimeModel};
use crate::numerics::{fd, linalg, MAX_DIM};
use serde::{Deserialize, Serialize};

/// Controls for the shooting solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub max_iterations: usize,
    pub residual: f64,
    pub ode_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { max_iterations: 50, residual: 1e-10, ode_tol: 1e-12 }
    }
}

/// Orthonormal frame at `p`, Gram–Schmidt on the coordinate basis with the
/// time axis first. Row-major `e[μ*m + a] = e_a^μ`; `e_0` is future timelike.
pub fn orthonormal_frame(model: &SpacetimeModel, p: &[f64]) -> Vec<f64> {
    let m = model.dim();
    let ta = model.time_axis();
    let order: Vec<usize> = std::iter::once(ta).chain((0..m).filter(|&i| i != ta)).collect();
    let mut g = [0.0; MAX_DIM * MAX_DIM];
    model.metric_into(p, &mut g);
    let ip = |a: &[f64], b: &[f64]| -> f64 { (0..m).map(|i| (0..m).map(|j| g[i * m + j] * a[i] * b[j]).sum::<f64>()).sum() };
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (a, &axis) in order.iter().enumerate() {
        let mut v = vec![0.0; m];
        v[axis] = 1.0;
        for (b, e) in frame.iter().enumerate() {
            let sign = if b == 0 { 1.0 } else { -1.0 };
            let c = sign * ip(&v, e);
            v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= c * ei);
        }
        let n = ip(&v, &v).abs().sqrt();
        v.iter_mut().for_each(|vi| *vi /= n);
        if a == 0 && v[ta] < 0.0 {
            v.iter_mut().for_each(|vi| *vi = -*vi);
        }
        frame.push(v);
    }
    let mut e = vec![0.0; m * m];
    for (a, v) in frame.iter().enumerate() {
        for mu in 0..m {
            e[mu * m + a] = v[mu];
        }
    }
    e
}

fn apply(m: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..m).map(|i| (0..m).map(|j| a[i * m + j] * x[j]).sum()).collect()
}

/// The normal-coordinate chart map: `x_nc ↦ exp_p(E x_nc)`.
pub fn normal_coordinates(model: &SpacetimeModel, p: &[f64], x_nc: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let m = model.dim();
    let w = apply(m, &orthonormal_frame(model, p), x_nc);
    let ray = JacobiRay::shoot(model, p, &w, &[1.0], ShootingOptions::default().ode_tol)?;
    let end = ray.samples.last().expect("ray sample");
    if ray.chart_exit || !model.chart().contains(&end.x) {
        return Err(GeometryError::OutOfChart(end.x.clone()));
    }
    Ok(end.x.clone())
}

/// Solves `exp_p(w) = q` for the coordinate velocity `w` by damped Newton
/// iteration started from the flat chord `q − p`.
pub fn shoot(model: &SpacetimeModel, p: &[f64], q: &[f64], opts: &ShootingOptions) -> Result<(Vec<f64>, JacobiRay, f64), GeometryError> {
    let m = model.dim();
    for x in [p, q] {
        if x.len() != m || !model.chart().contains(x) {
            return Err(GeometryError::OutOfChart(x.to_vec()));
        }
    }
    let mut w: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let residual_of = |ray: &JacobiRay| -> (Vec<f64>, f64) {
        let x = &ray.samples.last().expect("ray sample").x;
        let r: Vec<f64> = q.iter().zip(x).map(|(a, b)| a - b).collect();
        let n = linalg::norm(&r);
        (r, if ray.chart_exit { f64::INFINITY } else { n })
    };
    let mut ray = JacobiRay::shoot(model, p, &w, &[1.0], opts.ode_tol)?;
    let (mut r, mut res) = residual_of(&ray);
    let mut iterations = 0;
    while res > opts.residual {
        if iterations >= opts.max_iterations || !res.is_finite() {
            return Err(GeometryError::NoConvergence { residual: res, iterations });
        }
        iterations += 1;
        let d = &ray.samples.last().expect("ray sample").d;
        let mut dinv = [0.0; MAX_DIM * MAX_DIM];
        if linalg::invert(m, d, &mut dinv).is_none() {
            return Err(GeometryError::ConjugatePointSuspected);
        }
        let step = apply(m, &dinv[..m * m], &r);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            let tray = JacobiRay::shoot(model, p, &trial, &[1.0], opts.ode_tol)?;
            let (tr, tres) = residual_of(&tray);
            if tres < res || lambda < 1e-3 {
                w = trial;
                ray = tray;
                r = tr;
                res = tres;
                break;
            }
            lambda *= 0.5;
        }
    }
    Ok((w, ray, res))
}

/// Inverse of [`normal_coordinates`].
pub fn normal_coordinates_inverse(model: &SpacetimeModel, p: &[f64], q: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let m = model.dim();
    let (w, _, _) = shoot(model, p, q, &ShootingOptions::default())?;
    let mut einv = vec![0.0; m * m];
    linalg::invert(m, &orthonormal_frame(model, p), &mut einv).ok_or(GeometryError::ConjugatePointSuspected)?;
    Ok(apply(m, &einv, &w))
}

/// Signed world function data for `s(x, y)` with `y = p` (shooting base)
/// and `x = q` (endpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFunctionResult {
    pub s: f64,
    /// `∂s/∂x^μ` at the endpoint `q`.
    pub grad_x: Vec<f64>,
    /// `∂s/∂y^μ` at the base `p`.
    pub grad_y: Vec<f64>,
    /// Transport factor, from the Jacobi fields of the connecting geodesic.
    #[serde(rename = "M")]
    pub m_factor: f64,
    /// `Δ^{1/2}(q, p)`.
    pub sqrt_van_vleck: f64,
    pub connecting_geodesic: GeodesicPath,
    pub converged: bool,
    pub residual: f64,
}

/// `s(p, q) = −g_p(w, w)` where `exp_p(w) = q`; positive for spacelike pairs.
pub fn world_function(model: &SpacetimeModel, p: &[f64], q: &[f64]) -> Result<WorldFunctionResult, GeometryError> {
    world_function_with(model, p, q, &ShootingOptions::default())
}

pub fn world_function_with(model: &SpacetimeModel, p: &[f64], q: &[f64], opts: &ShootingOptions) -> Result<WorldFunctionResult, GeometryError> {
    let (w, ray, residual) = shoot(model, p, q, opts)?;
    let end = ray.samples.last().expect("ray sample");
    let s = -model.inner(p, &w, &w);
    let grad_x: Vec<f64> = model.lower(&end.x, &end.u).iter().map(|v| -2.0 * v).collect();
    let grad_y: Vec<f64> = model.lower(p, &w).iter().map(|v| 2.0 * v).collect();
    let coincident = w.iter().all(|v| *v == 0.0);
    let (mf, vv) = if coincident { (0.0, 1.0) } else { (ray.transport_factor(model, 0), ray.sqrt_van_vleck(model, 0)) };
    let path = GeodesicPath {
        samples: vec![
            GeodesicSample { t: 0.0, x: p.to_vec(), u: w.clone() },
            GeodesicSample { t: 1.0, x: end.x.clone(), u: end.u.clone() },
        ],
        accepted_steps: 0,
        rejected_steps: 0,
        chart_exit: false,
    };
    Ok(WorldFunctionResult { s, grad_x, grad_y, m_factor: mf, sqrt_van_vleck: vv, connecting_geodesic: path, converged: true, residual })
}

/// `M(x, y) = −½ □_x s(x, y) − m` with `y = p`, `x = q`; the box is taken by
/// 4th-order differences of `grad_x s`.
pub fn m_factor(model: &SpacetimeModel, p: &[f64], q: &[f64]) -> Result<f64, GeometryError> {
    let m = model.dim();
    let mut ginv = [0.0; MAX_DIM * MAX_DIM];
    model.inverse_metric_into(q, &mut ginv);
    let centre = world_function(model, p, q)?;
    let mut hess = vec![0.0; m * m];
    let mut x = q.to_vec();
    for mu in 0..m {
        let h = model.fd_step(mu);
        for &(o, wgt) in fd::D1.iter() {
            x.copy_from_slice(q);
            x[mu] += o * h;
            let r = world_function(model, p, &x)?;
            for nu in 0..m {
                hess[mu * m + nu] += wgt * r.grad_x[nu] / h;
            }
        }
    }
    let gam_c = model.contracted_christoffel(q);
    let mut boxs = 0.0;
    for mu in 0..m {
        for nu in 0..m {
            boxs += ginv[mu * m + nu] * hess[mu * m + nu];
        }
        boxs -= gam_c[mu] * centre.grad_x[mu];
    }
    Ok(-0.5 * boxs - m as f64)
}
