//! Geodesic flow, Jacobi fields along geodesics and the bicharacteristic flow
//! of null covectors.

use super::{CotangentPoint, GeometryError, SpacetimeModel};
use crate::numerics::linalg;
use crate::numerics::ode::{self, OdeOptions};
use crate::numerics::MAX_DIM;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Sampled affinely parametrised geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Set when the integration stopped because the curve left the chart box.
    pub chart_exit: bool,
}

impl GeodesicPath {
    pub fn end(&self) -> &GeodesicSample {
        self.samples.last().expect("geodesic path has at least one sample")
    }

    /// `max_t |g(u,u)(t) − g(u,u)(0)|`.
    pub fn norm_drift(&self, model: &SpacetimeModel) -> f64 {
        let n0 = {
            let s = &self.samples[0];
            model.inner(&s.x, &s.u, &s.u)
        };
        self.samples
            .iter()
            .map(|s| (model.inner(&s.x, &s.u, &s.u) - n0).abs())
            .fold(0.0, f64::max)
    }
}

fn geodesic_rhs(model: &SpacetimeModel, y: &[f64], d: &mut [f64]) {
    let m = model.dim();
    d[..m].copy_from_slice(&y[m..2 * m]);
    let (x, u) = y.split_at(m);
    model.geodesic_accel(x, &u[..m], &mut d[m..2 * m]);
}

fn step_failure(e: ode::OdeError) -> GeometryError {
    GeometryError::StepFailure(e.to_string())
}

/// Integrates `ẍ^λ = −Γ^λ_{μν} ẋ^μ ẋ^ν` over `t_span`, recording every
/// accepted step. Stops early with `chart_exit` when the curve leaves the chart.
pub fn integrate_geodesic(
    model: &SpacetimeModel,
    x0: &[f64],
    u0: &[f64],
    t_span: (f64, f64),
    tol: f64,
) -> Result<GeodesicPath, GeometryError> {
    let m = model.dim();
    if x0.len() != m || !model.chart().contains(x0) {
        return Err(GeometryError::OutOfChart(x0.to_vec()));
    }
    let y0: Vec<f64> = x0.iter().chain(u0).copied().collect();
    let opts = OdeOptions::with_tol(tol).recording();
    let chart = model.chart();
    let out = ode::integrate(
        |_, y, d| geodesic_rhs(model, y, d),
        t_span.0,
        &y0,
        &[t_span.1],
        &opts,
        |_, y| !chart.contains(&y[..m]),
    )
    .map_err(step_failure)?;
    let samples = out
        .t
        .iter()
        .zip(&out.y)
        .map(|(t, y)| GeodesicSample { t: *t, x: y[..m].to_vec(), u: y[m..2 * m].to_vec() })
        .collect();
    Ok(GeodesicPath { samples, accepted_steps: out.accepted, rejected_steps: out.rejected, chart_exit: out.stopped_early })
}

/// State of a geodesic `x(t) = exp_p(t w)` together with its Jacobi matrix
/// `D(t) = ∂x(t)/∂w` and `Ḋ(t)` at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Row-major `D[λ*m + a]`.
    pub d: Vec<f64>,
    pub d_dot: Vec<f64>,
}

/// Geodesic from a base point with its variational (Jacobi) data.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiRay {
    pub base: Vec<f64>,
    pub w: Vec<f64>,
    pub samples: Vec<JacobiSample>,
    pub chart_exit: bool,
}

impl JacobiRay {
    /// Integrates the geodesic with initial velocity `w` from `base` and its
    /// Jacobi matrix, sampled at the increasing parameters `t_out` (> 0).
    pub fn shoot(model: &SpacetimeModel, base: &[f64], w: &[f64], t_out: &[f64], tol: f64) -> Result<Self, GeometryError> {
        let m = model.dim();
        if model.is_flat_minkowski() {
            let samples = t_out
                .iter()
                .map(|&t| {
                    let mut d = vec![0.0; m * m];
                    let mut dd = vec![0.0; m * m];
                    for i in 0..m {
                        d[i * m + i] = t;
                        dd[i * m + i] = 1.0;
                    }
                    JacobiSample { t, x: base.iter().zip(w).map(|(b, v)| b + t * v).collect(), u: w.to_vec(), d, d_dot: dd }
                })
                .collect();
            return Ok(Self { base: base.to_vec(), w: w.to_vec(), samples, chart_exit: false });
        }
        let mm = m * m;
        let mut y0 = vec![0.0; 2 * m + 2 * mm];
        y0[..m].copy_from_slice(base);
        y0[m..2 * m].copy_from_slice(w);
        for a in 0..m {
            y0[2 * m + mm + a * m + a] = 1.0;
        }
        let opts = OdeOptions::with_tol(tol);
        let chart = model.chart();
        let out = ode::integrate(
            |_, y, dy| jacobi_rhs(model, y, dy),
            0.0,
            &y0,
            t_out,
            &opts,
            |_, y| !chart.contains(&y[..m]),
        )
        .map_err(step_failure)?;
        let samples = out
            .t
            .iter()
            .zip(&out.y)
            .map(|(t, y)| JacobiSample {
                t: *t,
                x: y[..m].to_vec(),
                u: y[m..2 * m].to_vec(),
                d: y[2 * m..2 * m + mm].to_vec(),
                d_dot: y[2 * m + mm..].to_vec(),
            })
            .collect();
        Ok(Self { base: base.to_vec(), w: w.to_vec(), samples, chart_exit: out.stopped_early })
    }

    /// `Δ^{1/2}` (square root of the van Vleck determinant) at sample `i`.
    pub fn sqrt_van_vleck(&self, model: &SpacetimeModel, i: usize) -> f64 {
        let s = &self.samples[i];
        let m = model.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        model.metric_into(&s.x, &mut g);
        let gx = linalg::det(m, &g[..m * m]).abs();
        model.metric_into(&self.base, &mut g);
        let gy = linalg::det(m, &g[..m * m]).abs();
        let scaled: Vec<f64> = s.d.iter().map(|v| v / s.t).collect();
        let dj = linalg::det(m, &scaled).abs();
        (gy.sqrt() / (gx.sqrt() * dj)).sqrt()
    }

    /// Transport factor `M` at sample `i`: `t·d/dt ln Δ^{-1}`.
    pub fn transport_factor(&self, model: &SpacetimeModel, i: usize) -> f64 {
        let s = &self.samples[i];
        let m = model.dim();
        let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        model.christoffel_into(&s.x, &mut gam);
        let mut trace_gamma = 0.0;
        for mu in 0..m {
            for l in 0..m {
                trace_gamma += gam[mu * m * m + mu * m + l] * s.u[l];
            }
        }
        let mut dinv = [0.0; MAX_DIM * MAX_DIM];
        if linalg::invert(m, &s.d, &mut dinv).is_none() {
            return f64::NAN;
        }
        let mut tr = 0.0;
        for a in 0..m {
            for l in 0..m {
                tr += dinv[a * m + l] * s.d_dot[l * m + a];
            }
        }
        s.t * (trace_gamma + tr) - m as f64
    }
}

/// Right-hand side of the geodesic + Jacobi system on the state
/// `[x, u, D, Ḋ]` (`D` row-major `m × m`).
pub fn jacobi_rhs(model: &SpacetimeModel, y: &[f64], dy: &mut [f64]) {
    let m = model.dim();
    let mm = m * m;
    let (x, rest) = y.split_at(m);
    let (u, rest) = rest.split_at(m);
    let (d, dd) = rest.split_at(mm);
    let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
    let mut dgam = vec![0.0; m * m * m * m];
    model.christoffel_into(x, &mut gam);
    model.christoffel_derivs_into(x, &mut dgam);
    dy[..m].copy_from_slice(u);
    for l in 0..m {
        let mut acc = 0.0;
        for mu in 0..m {
            for nu in 0..m {
                acc += gam[l * mm + mu * m + nu] * u[mu] * u[nu];
            }
        }
        dy[m + l] = -acc;
    }
    dy[2 * m..2 * m + mm].copy_from_slice(dd);
    // Γ(u,·) and ∂_ρΓ(u,u)
    let mut gu = [0.0; MAX_DIM * MAX_DIM];
    let mut dguu = [0.0; MAX_DIM * MAX_DIM];
    for l in 0..m {
        for nu in 0..m {
            gu[l * m + nu] = (0..m).map(|mu| gam[l * mm + mu * m + nu] * u[mu]).sum();
        }
        for r in 0..m {
            let base = r * m * mm + l * mm;
            let mut acc = 0.0;
            for mu in 0..m {
                for nu in 0..m {
                    acc += dgam[base + mu * m + nu] * u[mu] * u[nu];
                }
            }
            dguu[l * m + r] = acc;
        }
    }
    for l in 0..m {
        for a in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += dguu[l * m + r] * d[r * m + a] + 2.0 * gu[l * m + r] * dd[r * m + a];
            }
            dy[2 * m + mm + l * m + a] = -acc;
        }
    }
}

/// Bicharacteristic strip through a null covector: the null geodesic with
/// initial velocity `g^{μν}ξ_ν`, with ξ parallel-transported along it.
pub fn propagate_null(
    model: &SpacetimeModel,
    q: &[f64],
    xi: &[f64],
    t_span: (f64, f64),
    tol: f64,
) -> Result<Vec<CotangentPoint>, GeometryError> {
    use super::NullClass;
    if model.null_classify(q, xi, 1e-9)? == NullClass::NonNull {
        return Err(GeometryError::NonNullInput);
    }
    let m = model.dim();
    let u0 = model.raise(q, xi);
    let y0: Vec<f64> = q.iter().chain(&u0).chain(xi).copied().collect();
    let opts = OdeOptions::with_tol(tol).recording();
    let chart = model.chart();
    let out = ode::integrate(
        |_, y, d| {
            geodesic_rhs(model, &y[..2 * m], &mut d[..2 * m]);
            let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
            model.christoffel_into(&y[..m], &mut gam);
            let (u, k) = (&y[m..2 * m], &y[2 * m..]);
            for mu in 0..m {
                let mut acc = 0.0;
                for l in 0..m {
                    for nu in 0..m {
                        acc += gam[l * m * m + mu * m + nu] * u[nu] * k[l];
                    }
                }
                d[2 * m + mu] = acc;
            }
        },
        t_span.0,
        &y0,
        &[t_span.1],
        &opts,
        |_, y| !chart.contains(&y[..m]),
    )
    .map_err(step_failure)?;
    Ok(out.y.iter().map(|y| CotangentPoint { q: y[..m].to_vec(), xi: y[2 * m..].to_vec() }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ChartBox, Conformal, UltrastaticBump};
    use std::sync::Arc;

    fn bump(m: usize) -> SpacetimeModel {
        SpacetimeModel::new(
            Arc::new(UltrastaticBump { m, amplitude: 0.3, width: 0.6, center: vec![0.1; m - 1] }),
            ChartBox::cube(m, 1.5),
            0,
        )
        .unwrap()
    }

    #[test]
    fn flat_geodesic_is_a_line() {
        let s = SpacetimeModel::minkowski(4, 2.0);
        let p = integrate_geodesic(&s, &[0.0; 4], &[1.0, 0.5, 0.0, 0.0], (0.0, 1.0), 1e-10).unwrap();
        for smp in &p.samples {
            assert!((smp.x[0] - smp.t).abs() < 1e-12 && (smp.x[1] - 0.5 * smp.t).abs() < 1e-12);
        }
        assert!(!p.chart_exit);
    }

    #[test]
    fn norm_is_conserved_on_curved_metrics() {
        let conf = SpacetimeModel::new(Arc::new(Conformal { m: 4, c: 1.0 }), ChartBox::cube(4, 1.0), 0).unwrap();
        for model in [conf, bump(3), bump(4)] {
            let m = model.dim();
            let mut u = vec![0.3; m];
            u[0] = 0.8;
            let p = integrate_geodesic(&model, &vec![0.05; m], &u, (0.0, 1.0), 1e-10).unwrap();
            assert!(p.norm_drift(&model) <= 1e-8, "{} {}", model.name(), p.norm_drift(&model));
        }
    }

    #[test]
    fn endpoint_matches_tight_tolerance_run() {
        let model = bump(3);
        let u = [0.9, 0.4, -0.3];
        let a = integrate_geodesic(&model, &[0.0; 3], &u, (0.0, 1.0), 1e-9).unwrap();
        let b = integrate_geodesic(&model, &[0.0; 3], &u, (0.0, 1.0), 1e-13).unwrap();
        let diff = a.end().x.iter().zip(&b.end().x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn chart_exit_flag() {
        let s = SpacetimeModel::minkowski(3, 1.0);
        let p = integrate_geodesic(&s, &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 5.0), 1e-8).unwrap();
        assert!(p.chart_exit);
    }

    #[test]
    fn jacobi_matrix_matches_finite_difference_of_exp() {
        let model = bump(3);
        let w = [0.5, 0.3, -0.4];
        let ray = JacobiRay::shoot(&model, &[0.0; 3], &w, &[1.0], 1e-12).unwrap();
        let h = 1e-5;
        for a in 0..3 {
            let mut wp = w;
            let mut wm = w;
            wp[a] += h;
            wm[a] -= h;
            let xp = JacobiRay::shoot(&model, &[0.0; 3], &wp, &[1.0], 1e-12).unwrap().samples[0].x.clone();
            let xm = JacobiRay::shoot(&model, &[0.0; 3], &wm, &[1.0], 1e-12).unwrap().samples[0].x.clone();
            for l in 0..3 {
                let fd = (xp[l] - xm[l]) / (2.0 * h);
                assert!((fd - ray.samples[0].d[l * 3 + a]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn flat_van_vleck_is_one() {
        let s = SpacetimeModel::minkowski(4, 2.0);
        let r = JacobiRay::shoot(&s, &[0.0; 4], &[0.3, 0.1, 0.2, 0.0], &[0.5, 1.0], 1e-12).unwrap();
        for i in 0..2 {
            assert!((r.sqrt_van_vleck(&s, i) - 1.0).abs() < 1e-14);
            assert!(r.transport_factor(&s, i).abs() < 1e-14);
        }
    }

    #[test]
    fn null_flow_flat_and_curved() {
        let s = SpacetimeModel::minkowski(4, 3.0);
        let pts = propagate_null(&s, &[0.0; 4], &[-1.0, 1.0, 0.0, 0.0], (0.0, 2.0), 1e-10).unwrap();
        let last = pts.last().unwrap();
        assert!((last.q[0] + 2.0).abs() < 1e-12 && (last.q[1] + 2.0).abs() < 1e-12);
        assert_eq!(last.xi, vec![-1.0, 1.0, 0.0, 0.0]);

        let model = bump(4);
        let q = [0.0, 0.2, 0.0, 0.1];
        let psi = 1.0 + 0.3 * (-0.02f64 / 0.36).exp();
        let g = model.metric_at(&q).unwrap();
        assert!((g[(1, 1)] + psi).abs() < 1e-12);
        let xi = [1.0 / psi.sqrt(), 1.0, 0.0, 0.0];
        let pts = propagate_null(&model, &q, &xi, (0.0, 0.8), 1e-11).unwrap();
        for p in &pts {
            let up = model.raise(&p.q, &p.xi);
            let n: f64 = up.iter().zip(&p.xi).map(|(a, b)| a * b).sum();
            assert!(n.abs() <= 1e-8, "{n}");
        }
    }

    #[test]
    fn non_null_input_rejected() {
        let s = SpacetimeModel::minkowski(3, 1.0);
        assert_eq!(propagate_null(&s, &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 1.0), 1e-8), Err(GeometryError::NonNullInput));
    }
}
