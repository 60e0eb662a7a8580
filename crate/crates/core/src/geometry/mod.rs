//! Lorentzian geometry backend: metrics, Christoffel symbols, geodesics and
//! their Jacobi fields, normal coordinates, the signed world function, the
//! transport factor and null covector classification.
//!
//! Sign conventions: signature (+,−,…,−); the world function `s(p,q)` is
//! positive for spacelike separation, so `s = −η(x,x)` in normal coordinates.

pub mod geodesic;
pub mod metrics;
pub mod normal;

use crate::numerics::{fd, linalg, MAX_DIM};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub use geodesic::{integrate_geodesic, propagate_null, GeodesicPath, GeodesicSample, JacobiRay};
pub use metrics::{Conformal, MetricField, Minkowski, UltrastaticBump, WithoutDerivatives};
pub use normal::{m_factor, normal_coordinates, shoot, normal_coordinates_inverse, orthonormal_frame, world_function, ShootingOptions, WorldFunctionResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {0:?} lies outside the chart box")]
    OutOfChart(Vec<f64>),
    #[error("metric at {0:?} does not have Lorentzian signature")]
    SignatureError(Vec<f64>),
    #[error("finite-difference stencil at {0:?} leaves the chart box")]
    StencilOutOfChart(Vec<f64>),
    #[error("integrator failure: {0}")]
    StepFailure(String),
    #[error("shooting did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("shooting Jacobian is near-singular (conjugate point suspected)")]
    ConjugatePointSuspected,
    #[error("covector is zero")]
    ZeroCovector,
    #[error("covector is not null")]
    NonNullInput,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Axis-aligned coordinate box, user-asserted to be a convex normal domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn cube(m: usize, half: f64) -> Self {
        Self { lo: vec![-half; m], hi: vec![half; m] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Largest edge length; the natural length unit of the chart.
    pub fn scale(&self) -> f64 {
        (0..self.lo.len()).map(|i| self.extent(i)).fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Christoffel symbols `Γ^λ_{μν}` stored as `data[λ*m*m + μ*m + ν]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub m: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, l: usize, mu: usize, nu: usize) -> f64 {
        self.data[l * self.m * self.m + mu * self.m + nu]
    }
}

/// Causal class of a covector relative to the time orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullClass {
    FutureNull,
    PastNull,
    NonNull,
}

/// A point of the cotangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub q: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Spacetime: analytic metric field, chart box and time orientation.
/// Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct SpacetimeModel {
    field: Arc<dyn MetricField>,
    chart: ChartBox,
    time_axis: usize,
    fd_rel: f64,
}

impl SpacetimeModel {
    pub fn new(field: Arc<dyn MetricField>, chart: ChartBox, time_axis: usize) -> Result<Self, GeometryError> {
        let m = field.dim();
        if m < 3 || m > MAX_DIM {
            return Err(GeometryError::InvalidModel(format!("dimension {m} outside 3..={MAX_DIM}")));
        }
        if chart.lo.len() != m || chart.hi.len() != m || chart.lo.iter().zip(&chart.hi).any(|(a, b)| a >= b) {
            return Err(GeometryError::InvalidModel("chart box has wrong shape".into()));
        }
        if time_axis >= m {
            return Err(GeometryError::InvalidModel(format!("time axis {time_axis} out of range")));
        }
        Ok(Self { field, chart, time_axis, fd_rel: 1e-3 })
    }

    pub fn minkowski(m: usize, half: f64) -> Self {
        Self::new(Arc::new(Minkowski { m }), ChartBox::cube(m, half), 0).expect("valid flat model")
    }

    /// Finite-difference spacing as a fraction of the box extent (default 1e−3).
    pub fn with_fd_rel(mut self, rel: f64) -> Self {
        self.fd_rel = rel;
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }
    pub fn chart(&self) -> &ChartBox {
        &self.chart
    }
    pub fn time_axis(&self) -> usize {
        self.time_axis
    }
    pub fn field(&self) -> &Arc<dyn MetricField> {
        &self.field
    }
    pub fn name(&self) -> &str {
        self.field.name()
    }
    pub fn fd_step(&self, axis: usize) -> f64 {
        self.fd_rel * self.chart.extent(axis)
    }
    pub fn is_flat_minkowski(&self) -> bool {
        self.field.name() == "minkowski"
    }

    /// Raw metric components, no validation.
    pub fn metric_into(&self, x: &[f64], g: &mut [f64]) {
        self.field.metric(x, g)
    }

    /// Metric derivatives `∂_λ g_{μν}`, closed form when available and
    /// 4th-order central differences otherwise.
    pub fn metric_derivs_into(&self, x: &[f64], dg: &mut [f64]) {
        if self.field.metric_derivs(x, dg) {
            return;
        }
        let m = self.dim();
        let mut y = [0.0; MAX_DIM];
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        for l in 0..m {
            let h = self.fd_step(l);
            let out = &mut dg[l * m * m..(l + 1) * m * m];
            out.fill(0.0);
            for &(o, w) in fd::D1.iter() {
                y[..m].copy_from_slice(&x[..m]);
                y[l] += o * h;
                self.field.metric(&y[..m], &mut g);
                for k in 0..m * m {
                    out[k] += w * g[k] / h;
                }
            }
        }
    }

    /// `g_{μν}(x)` with chart and signature validation.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let m = self.dim();
        if x.len() != m || !self.chart.contains(x) {
            return Err(GeometryError::OutOfChart(x.to_vec()));
        }
        let mut g = vec![0.0; m * m];
        self.metric_into(x, &mut g);
        let mat = DMatrix::from_row_slice(m, m, &g);
        let asym = (&mat - mat.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(GeometryError::SignatureError(x.to_vec()));
        }
        let eig = mat.clone().symmetric_eigen();
        let pos = eig.eigenvalues.iter().filter(|v| **v > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
        if pos != 1 || neg != m - 1 {
            return Err(GeometryError::SignatureError(x.to_vec()));
        }
        Ok(mat)
    }

    /// Inverse metric `g^{μν}` written row-major; returns `det g`.
    pub fn inverse_metric_into(&self, x: &[f64], ginv: &mut [f64]) -> f64 {
        let m = self.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.metric_into(x, &mut g);
        linalg::invert(m, &g[..m * m], ginv).unwrap_or(f64::NAN)
    }

    /// Christoffel symbols without validation.
    pub fn christoffel_into(&self, x: &[f64], gam: &mut [f64]) {
        let m = self.dim();
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        let mut dg = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.inverse_metric_into(x, &mut ginv);
        self.metric_derivs_into(x, &mut dg);
        let mm = m * m;
        for l in 0..m {
            for mu in 0..m {
                for nu in mu..m {
                    let mut acc = 0.0;
                    for s in 0..m {
                        let gi = ginv[l * m + s];
                        if gi != 0.0 {
                            acc += gi * (dg[mu * mm + s * m + nu] + dg[nu * mm + s * m + mu] - dg[s * mm + mu * m + nu]);
                        }
                    }
                    gam[l * mm + mu * m + nu] = 0.5 * acc;
                    gam[l * mm + nu * m + mu] = 0.5 * acc;
                }
            }
        }
    }

    /// `Γ^λ_{μν}(x)`; requires the finite-difference stencil to fit in the
    /// chart when no closed-form derivatives exist.
    pub fn christoffels(&self, x: &[f64]) -> Result<Christoffel, GeometryError> {
        let m = self.dim();
        if x.len() != m || !self.chart.contains(x) {
            return Err(GeometryError::OutOfChart(x.to_vec()));
        }
        let mut probe = vec![0.0; m * m * m];
        if !self.field.metric_derivs(x, &mut probe) {
            for a in 0..m {
                let h = 2.0 * self.fd_step(a);
                if x[a] - 2.0 * h < self.chart.lo[a] || x[a] + 2.0 * h > self.chart.hi[a] {
                    return Err(GeometryError::StencilOutOfChart(x.to_vec()));
                }
            }
        }
        let mut data = vec![0.0; m * m * m];
        self.christoffel_into(x, &mut data);
        Ok(Christoffel { m, data })
    }

    /// `∂_ρ Γ^λ_{μν}` by 4th-order differences of the Christoffel symbols,
    /// stored as `out[ρ*m³ + λ*m² + μ*m + ν]`.
    pub fn christoffel_derivs_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let m3 = m * m * m;
        let mut y = [0.0; MAX_DIM];
        let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        for r in 0..m {
            let h = self.fd_step(r);
            let o = &mut out[r * m3..(r + 1) * m3];
            o.fill(0.0);
            for &(off, w) in fd::D1.iter() {
                y[..m].copy_from_slice(&x[..m]);
                y[r] += off * h;
                self.christoffel_into(&y[..m], &mut gam);
                for k in 0..m3 {
                    o[k] += w * gam[k] / h;
                }
            }
        }
    }

    /// Geodesic acceleration `a^λ = −Γ^λ_{μν} u^μ u^ν`.
    pub fn geodesic_accel(&self, x: &[f64], u: &[f64], a: &mut [f64]) {
        let m = self.dim();
        let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.christoffel_into(x, &mut gam);
        for l in 0..m {
            let mut acc = 0.0;
            for mu in 0..m {
                for nu in 0..m {
                    acc += gam[l * m * m + mu * m + nu] * u[mu] * u[nu];
                }
            }
            a[l] = -acc;
        }
    }

    /// `g(u, v)` at x.
    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let m = self.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.metric_into(x, &mut g);
        (0..m).map(|i| (0..m).map(|j| g[i * m + j] * u[i] * v[j]).sum::<f64>()).sum()
    }

    /// Raises a covector: `ξ^μ = g^{μν} ξ_ν`.
    pub fn raise(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        self.inverse_metric_into(x, &mut ginv);
        (0..m).map(|i| (0..m).map(|j| ginv[i * m + j] * xi[j]).sum()).collect()
    }

    /// Lowers a vector: `v_μ = g_{μν} v^ν`.
    pub fn lower(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.metric_into(x, &mut g);
        (0..m).map(|i| (0..m).map(|j| g[i * m + j] * v[j]).sum()).collect()
    }

    /// `g^{λσ}(x) Γ^λ... ` contracted Christoffel vector `g^{αβ} Γ^λ_{αβ}`.
    pub fn contracted_christoffel(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.inverse_metric_into(x, &mut ginv);
        self.christoffel_into(x, &mut gam);
        (0..m)
            .map(|l| (0..m * m).map(|k| ginv[k] * gam[l * m * m + k]).sum())
            .collect()
    }

    /// Classifies a covector at q as future/past null or non-null.
    pub fn null_classify(&self, q: &[f64], xi: &[f64], tol: f64) -> Result<NullClass, GeometryError> {
        let m = self.dim();
        if xi.iter().all(|v| *v == 0.0) {
            return Err(GeometryError::ZeroCovector);
        }
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        self.inverse_metric_into(q, &mut ginv);
        let mut n = 0.0;
        let mut aux = 0.0;
        for i in 0..m {
            for j in 0..m {
                n += ginv[i * m + j] * xi[i] * xi[j];
                aux += ginv[i * m + j].abs() * xi[i].abs() * xi[j].abs();
            }
        }
        if n.abs() > tol * aux {
            return Ok(NullClass::NonNull);
        }
        let up = self.raise(q, xi);
        Ok(if up[self.time_axis] > 0.0 { NullClass::FutureNull } else { NullClass::PastNull })
    }
}

/// Free-function form of [`SpacetimeModel::metric_at`].
pub fn metric_at(model: &SpacetimeModel, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    model.metric_at(x)
}

/// Free-function form of [`SpacetimeModel::christoffels`].
pub fn christoffels(model: &SpacetimeModel, x: &[f64]) -> Result<Christoffel, GeometryError> {
    model.christoffels(x)
}

/// Free-function form of [`SpacetimeModel::null_classify`] with the default tolerance 1e−9.
pub fn null_classify(model: &SpacetimeModel, q: &[f64], xi: &[f64]) -> Result<NullClass, GeometryError> {
    model.null_classify(q, xi, 1e-9)
}

/// Builds one of the shipped metrics by name.
pub fn shipped_metric(name: &str, m: usize, params: &ShippedParams) -> Result<Arc<dyn MetricField>, GeometryError> {
    match name {
        "minkowski" => Ok(Arc::new(Minkowski { m })),
        "conformal" => Ok(Arc::new(Conformal { m, c: params.conformal_c })),
        "ultrastatic-bump" => Ok(Arc::new(UltrastaticBump {
            m,
            amplitude: params.bump_amplitude,
            width: params.bump_width,
            center: params.bump_center.clone().unwrap_or_else(|| vec![0.0; m - 1]),
        })),
        other => Err(GeometryError::InvalidModel(format!("unknown metric `{other}`"))),
    }
}

/// Parameter block for the shipped metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShippedParams {
    pub conformal_c: f64,
    pub bump_amplitude: f64,
    pub bump_width: f64,
    pub bump_center: Option<Vec<f64>>,
}

impl Default for ShippedParams {
    fn default() -> Self {
        Self { conformal_c: 1.0, bump_amplitude: 0.3, bump_width: 0.6, bump_center: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conformal(m: usize) -> SpacetimeModel {
        SpacetimeModel::new(Arc::new(Conformal { m, c: 1.0 }), ChartBox::cube(m, 1.0), 0).unwrap()
    }

    #[test]
    fn minkowski_metric_is_eta() {
        let s = SpacetimeModel::minkowski(4, 1.0);
        let g = s.metric_at(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        assert_eq!(g, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0, -1.0])));
    }

    #[test]
    fn conformal_metric_values() {
        let s = conformal(4);
        assert_eq!(s.metric_at(&[0.0; 4]).unwrap()[(1, 1)], -1.0);
        let g = s.metric_at(&[0.3, 0.0, 0.0, 0.0]).unwrap();
        assert!((g[(0, 0)] - 1.09f64.powi(2)).abs() < 1e-15);
        assert!((g[(3, 3)] + 1.1881).abs() < 1e-12);
    }

    #[test]
    fn out_of_chart_rejected() {
        let s = conformal(3);
        assert!(matches!(s.metric_at(&[2.0, 0.0, 0.0]), Err(GeometryError::OutOfChart(_))));
    }

    #[test]
    fn signature_error_detected() {
        #[derive(Debug)]
        struct Euclid;
        impl MetricField for Euclid {
            fn dim(&self) -> usize {
                3
            }
            fn name(&self) -> &str {
                "euclid"
            }
            fn metric(&self, _x: &[f64], g: &mut [f64]) {
                g[..9].copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
            }
        }
        let s = SpacetimeModel::new(Arc::new(Euclid), ChartBox::cube(3, 1.0), 0).unwrap();
        assert!(matches!(s.metric_at(&[0.0; 3]), Err(GeometryError::SignatureError(_))));
    }

    #[test]
    fn flat_christoffels_vanish_and_are_symmetric() {
        let s = SpacetimeModel::minkowski(4, 1.0);
        let c = s.christoffels(&[0.2, 0.1, 0.0, -0.1]).unwrap();
        assert!(c.data.iter().all(|v| *v == 0.0));
        let b = SpacetimeModel::new(
            Arc::new(UltrastaticBump { m: 3, amplitude: 0.4, width: 0.5, center: vec![0.1, 0.0] }),
            ChartBox::cube(3, 1.0),
            0,
        )
        .unwrap();
        let c = b.christoffels(&[0.0, 0.2, -0.3]).unwrap();
        for l in 0..3 {
            for mu in 0..3 {
                for nu in 0..3 {
                    assert_eq!(c.get(l, mu, nu), c.get(l, nu, mu));
                }
            }
        }
    }

    #[test]
    fn conformal_christoffels_match_closed_form() {
        // closed form for a(t)²η: Γ^0_{00} = a'/a, Γ^0_{ii} = a'/a, Γ^i_{0i} = a'/a
        let fd = SpacetimeModel::new(Arc::new(WithoutDerivatives(Conformal { m: 4, c: 1.0 })), ChartBox::cube(4, 1.0), 0).unwrap();
        let x = [0.3, 0.1, -0.2, 0.05];
        let c = fd.christoffels(&x).unwrap();
        let h = (2.0 * 0.3) / (1.0 + 0.09);
        let mut max_diff: f64 = 0.0;
        for l in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    let exact = match (l, mu, nu) {
                        (0, 0, 0) => h,
                        (0, a, b) if a == b => h,
                        (i, 0, j) | (i, j, 0) if i == j && i > 0 => h,
                        _ => 0.0,
                    };
                    max_diff = max_diff.max((c.get(l, mu, nu) - exact).abs());
                }
            }
        }
        assert!(max_diff < 1e-7, "{max_diff}");
    }

    #[test]
    fn stencil_out_of_chart() {
        let fd = SpacetimeModel::new(Arc::new(WithoutDerivatives(Conformal { m: 3, c: 1.0 })), ChartBox::cube(3, 1.0), 0).unwrap();
        assert!(matches!(fd.christoffels(&[0.999, 0.0, 0.0]), Err(GeometryError::StencilOutOfChart(_))));
    }

    #[test]
    fn null_classification_examples() {
        let s = SpacetimeModel::minkowski(4, 1.0);
        let q = [0.0; 4];
        assert_eq!(null_classify(&s, &q, &[1.0, 1.0, 0.0, 0.0]).unwrap(), NullClass::FutureNull);
        assert_eq!(null_classify(&s, &q, &[-1.0, 1.0, 0.0, 0.0]).unwrap(), NullClass::PastNull);
        assert_eq!(null_classify(&s, &q, &[1.0, 0.0, 0.0, 0.0]).unwrap(), NullClass::NonNull);
        assert_eq!(null_classify(&s, &q, &[0.0; 4]), Err(GeometryError::ZeroCovector));
    }
}
