//! Vector-bundle data over a spacetime: wave operators with metric principal
//! part, the connection they induce, parallel transport, and the Majorana
//! Dirac sector.

pub mod dirac;

use crate::geometry::{GeodesicPath, GeometryError, SpacetimeModel};
use crate::numerics::ode::{self, OdeOptions};
use crate::numerics::{fd, C64, MAX_DIM};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub use dirac::{dirac_apply, dirac_parametrix_factor, make_gamma_matrices, DiracModel, DiracVariant, GridKernel};

pub type FibreVector = DVector<C64>;
pub type FibreMatrix = DMatrix<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("finite-difference stencil at {0:?} leaves the chart box")]
    StencilOutOfChart(Vec<f64>),
    #[error("integrator failure: {0}")]
    StepFailure(String),
    #[error("no Majorana representation implemented for dimension {0}")]
    UnsupportedDimension(usize),
    #[error("grid too coarse for the derivative stencil")]
    GridTooCoarse,
    #[error("invalid bundle data: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type MatrixField = Arc<dyn Fn(&[f64]) -> FibreMatrix + Send + Sync>;
type MatrixListField = Arc<dyn Fn(&[f64]) -> Vec<FibreMatrix> + Send + Sync>;

/// Lower-order coefficients of a wave operator on a rank-`r` bundle together
/// with its antilinear conjugation `Γ v = Γ_conj · v̄` and hermitean form `h`.
#[derive(Clone)]
pub struct BundleModel {
    pub r: usize,
    /// `x ↦ [A^0, …, A^{m−1}]`, each `r × r`.
    pub a: MatrixListField,
    pub b: MatrixField,
    pub gamma_conj: FibreMatrix,
    pub h: MatrixField,
    /// Declares `A ≡ 0`; lets flat-space transport skip the fibre ODE.
    pub a_vanishes: bool,
}

impl fmt::Debug for BundleModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BundleModel").field("r", &self.r).field("gamma_conj", &self.gamma_conj).finish_non_exhaustive()
    }
}

impl BundleModel {
    pub fn new(r: usize, a: MatrixListField, b: MatrixField, gamma_conj: FibreMatrix, h: MatrixField) -> Result<Self, BundleError> {
        let sq = &gamma_conj * gamma_conj.map(|z| z.conj());
        if (sq - FibreMatrix::identity(r, r)).norm() > 1e-12 {
            return Err(BundleError::InvalidBundle("conjugation does not square to the identity".into()));
        }
        Ok(Self { r, a, b, gamma_conj, h, a_vanishes: false })
    }

    /// Trivial rank-`r` bundle: `A = B = 0`, `Γ` = entrywise conjugation, `h = 1`.
    pub fn trivial(m: usize, r: usize) -> Self {
        Self {
            r,
            a: Arc::new(move |_| vec![FibreMatrix::zeros(r, r); m]),
            b: Arc::new(move |_| FibreMatrix::zeros(r, r)),
            gamma_conj: FibreMatrix::identity(r, r),
            h: Arc::new(move |_| FibreMatrix::identity(r, r)),
            a_vanishes: true,
        }
    }

    /// Klein–Gordon operator `□ + mass²` on the trivial line bundle.
    pub fn klein_gordon(m: usize, mass: f64) -> Self {
        let mut b = Self::trivial(m, 1);
        b.b = Arc::new(move |_| FibreMatrix::from_element(1, 1, C64::new(mass * mass, 0.0)));
        b
    }

    /// Antilinear conjugation `Γ v = Γ_conj v̄`.
    pub fn conjugate(&self, v: &FibreVector) -> FibreVector {
        &self.gamma_conj * v.map(|z| z.conj())
    }
}

/// Value, gradient and Hessian of a section at a point, by 4th-order
/// central differences.
#[derive(Debug, Clone)]
pub struct SectionJet {
    pub value: FibreVector,
    pub grad: Vec<FibreVector>,
    /// `hess[μ*m + ν]`.
    pub hess: Vec<FibreVector>,
}

impl SectionJet {
    pub fn new<F: Fn(&[f64]) -> FibreVector>(model: &SpacetimeModel, f: &F, x: &[f64], second: bool) -> Result<Self, BundleError> {
        let m = model.dim();
        let chart = model.chart();
        for mu in 0..m {
            let h = model.fd_step(mu);
            if x[mu] - 2.0 * h < chart.lo[mu] || x[mu] + 2.0 * h > chart.hi[mu] {
                return Err(BundleError::StencilOutOfChart(x.to_vec()));
            }
        }
        let value = f(x);
        let r = value.len();
        let mut y = x.to_vec();
        let mut at = |shift: &[(usize, f64)]| {
            y.copy_from_slice(x);
            for &(ax, d) in shift {
                y[ax] += d;
            }
            f(&y)
        };
        let mut grad = vec![FibreVector::zeros(r); m];
        for mu in 0..m {
            let h = model.fd_step(mu);
            for &(o, w) in fd::D1.iter() {
                grad[mu] += at(&[(mu, o * h)]) * C64::new(w / h, 0.0);
            }
        }
        let mut hess = Vec::new();
        if second {
            hess = vec![FibreVector::zeros(r); m * m];
            for mu in 0..m {
                let hm = model.fd_step(mu);
                for &(o, w) in fd::D2.iter() {
                    let v = if o == 0.0 { value.clone() } else { at(&[(mu, o * hm)]) };
                    hess[mu * m + mu] += v * C64::new(w / (hm * hm), 0.0);
                }
                for nu in mu + 1..m {
                    let hn = model.fd_step(nu);
                    let mut acc = FibreVector::zeros(r);
                    for &(oa, wa) in fd::D1.iter() {
                        for &(ob, wb) in fd::D1.iter() {
                            acc += at(&[(mu, oa * hm), (nu, ob * hn)]) * C64::new(wa * wb / (hm * hn), 0.0);
                        }
                    }
                    hess[nu * m + mu] = acc.clone();
                    hess[mu * m + nu] = acc;
                }
            }
        }
        Ok(Self { value, grad, hess })
    }
}

/// Wave operator `P = g^{μν}∂_μ∂_ν + A^ν∂_ν + B` on a bundle.
#[derive(Debug, Clone)]
pub struct WaveOperator {
    pub base: SpacetimeModel,
    pub bundle: BundleModel,
}

impl WaveOperator {
    pub fn new(base: SpacetimeModel, bundle: BundleModel) -> Self {
        Self { base, bundle }
    }

    /// `(Pf)(x)` by finite differences of the section.
    pub fn apply<F: Fn(&[f64]) -> FibreVector>(&self, f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
        let m = self.base.dim();
        let jet = SectionJet::new(&self.base, f, x, true)?;
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        self.base.inverse_metric_into(x, &mut ginv);
        let a = (self.bundle.a)(x);
        let mut out = &(self.bundle.b)(x) * &jet.value;
        for mu in 0..m {
            out += &a[mu] * &jet.grad[mu];
            for nu in 0..m {
                let gi = ginv[mu * m + nu];
                if gi != 0.0 {
                    out += &jet.hess[mu * m + nu] * C64::new(gi, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Connection one-form `ω_ν = ½ g_{νσ}(A^σ + g^{αβ}Γ^σ_{αβ})` of the
    /// induced covariant derivative `∇_ν = ∂_ν + ω_ν`.
    pub fn connection_form(&self, x: &[f64]) -> Vec<FibreMatrix> {
        let m = self.base.dim();
        let r = self.bundle.r;
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.base.metric_into(x, &mut g);
        let gc = self.base.contracted_christoffel(x);
        let a = (self.bundle.a)(x);
        let id = FibreMatrix::identity(r, r);
        let up: Vec<FibreMatrix> = (0..m).map(|s| &a[s] + &id * C64::new(gc[s], 0.0)).collect();
        (0..m)
            .map(|nu| {
                let mut w = FibreMatrix::zeros(r, r);
                for s in 0..m {
                    w += &up[s] * C64::new(0.5 * g[nu * m + s], 0.0);
                }
                w
            })
            .collect()
    }

    /// `∇_v f` at x.
    pub fn induced_connection<F: Fn(&[f64]) -> FibreVector>(&self, v: &[f64], f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
        let jet = SectionJet::new(&self.base, f, x, false)?;
        let omega = self.connection_form(x);
        let mut out = FibreVector::zeros(self.bundle.r);
        for (nu, vn) in v.iter().enumerate() {
            if *vn != 0.0 {
                out += (&jet.grad[nu] + &omega[nu] * &jet.value) * C64::new(*vn, 0.0);
            }
        }
        Ok(out)
    }

    /// Residual of `2∇_{grad φ} f = P(φf) − φ P f − (□φ) f` at x, with `□`
    /// the Laplace–Beltrami operator.
    pub fn connection_identity_residual<F, G>(&self, phi: &G, f: &F, x: &[f64]) -> Result<f64, BundleError>
    where
        F: Fn(&[f64]) -> FibreVector,
        G: Fn(&[f64]) -> f64,
    {
        let phif = |y: &[f64]| f(y) * C64::new(phi(y), 0.0);
        let lhs_grad = self.base.raise(x, &scalar_gradient(&self.base, phi, x)?);
        let lhs = self.induced_connection(&lhs_grad, f, x)? * C64::new(2.0, 0.0);
        let box_phi = laplace_beltrami(&self.base, phi, x)?;
        let rhs = self.apply(&phif, x)? - self.apply(f, x)? * C64::new(phi(x), 0.0) - f(x) * C64::new(box_phi, 0.0);
        Ok((lhs - rhs).norm())
    }

    /// `|Γ P Γ f − P f|` at x.
    pub fn gamma_invariance_residual<F: Fn(&[f64]) -> FibreVector>(&self, f: &F, x: &[f64]) -> Result<f64, BundleError> {
        let gf = |y: &[f64]| self.bundle.conjugate(&f(y));
        let lhs = self.bundle.conjugate(&self.apply(&gf, x)?);
        Ok((lhs - self.apply(f, x)?).norm())
    }
}

/// Gradient `∂_μ φ` of a scalar function.
pub fn scalar_gradient<G: Fn(&[f64]) -> f64>(model: &SpacetimeModel, phi: &G, x: &[f64]) -> Result<Vec<f64>, BundleError> {
    let f = |y: &[f64]| FibreVector::from_element(1, C64::new(phi(y), 0.0));
    let jet = SectionJet::new(model, &f, x, false)?;
    Ok(jet.grad.iter().map(|v| v[0].re).collect())
}

/// Laplace–Beltrami operator `g^{μν}(∂_μ∂_ν φ − Γ^λ_{μν}∂_λ φ)`.
pub fn laplace_beltrami<G: Fn(&[f64]) -> f64>(model: &SpacetimeModel, phi: &G, x: &[f64]) -> Result<f64, BundleError> {
    let m = model.dim();
    let f = |y: &[f64]| FibreVector::from_element(1, C64::new(phi(y), 0.0));
    let jet = SectionJet::new(model, &f, x, true)?;
    let mut ginv = [0.0; MAX_DIM * MAX_DIM];
    model.inverse_metric_into(x, &mut ginv);
    let gc = model.contracted_christoffel(x);
    let mut acc = 0.0;
    for mu in 0..m {
        for nu in 0..m {
            acc += ginv[mu * m + nu] * jet.hess[mu * m + nu][0].re;
        }
        acc -= gc[mu] * jet.grad[mu][0].re;
    }
    Ok(acc)
}

/// Free-function form of [`WaveOperator::apply`].
pub fn apply_wave_operator<F: Fn(&[f64]) -> FibreVector>(p: &WaveOperator, f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
    p.apply(f, x)
}

/// Free-function form of [`WaveOperator::induced_connection`].
pub fn induced_connection<F: Fn(&[f64]) -> FibreVector>(p: &WaveOperator, v: &[f64], f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
    p.induced_connection(v, f, x)
}

/// Solves `∇_{u(t)} v = 0` along a geodesic path, re-integrating the geodesic
/// from its first sample jointly with the fibre vector. Returns `v` at every
/// sample of the path.
pub fn parallel_transport(p: &WaveOperator, path: &GeodesicPath, v0: &FibreVector, tol: f64) -> Result<Vec<FibreVector>, BundleError> {
    let m = p.base.dim();
    let r = p.bundle.r;
    let first = &path.samples[0];
    let times: Vec<f64> = path.samples.iter().skip(1).map(|s| s.t).collect();
    let mut y0: Vec<f64> = first.x.iter().chain(&first.u).copied().collect();
    y0.extend(v0.iter().flat_map(|z| [z.re, z.im]));
    let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
        let (x, u) = (&y[..m], &y[m..2 * m]);
        d[..m].copy_from_slice(u);
        p.base.geodesic_accel(x, u, &mut d[m..2 * m]);
        let omega = p.connection_form(x);
        let v = FibreVector::from_iterator(r, (0..r).map(|i| C64::new(y[2 * m + 2 * i], y[2 * m + 2 * i + 1])));
        let mut dv = FibreVector::zeros(r);
        for nu in 0..m {
            dv -= &omega[nu] * &v * C64::new(u[nu], 0.0);
        }
        for i in 0..r {
            d[2 * m + 2 * i] = dv[i].re;
            d[2 * m + 2 * i + 1] = dv[i].im;
        }
    };
    let out = ode::integrate(rhs, first.t, &y0, &times, &OdeOptions::with_tol(tol), |_, _| false)
        .map_err(|e| BundleError::StepFailure(e.to_string()))?;
    let unpack = |y: &[f64]| FibreVector::from_iterator(r, (0..r).map(|i| C64::new(y[2 * m + 2 * i], y[2 * m + 2 * i + 1])));
    Ok(std::iter::once(v0.clone()).chain(out.y.iter().map(|y| unpack(y))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{integrate_geodesic, ChartBox, Conformal, UltrastaticBump};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn bump3() -> SpacetimeModel {
        SpacetimeModel::new(Arc::new(UltrastaticBump { m: 3, amplitude: 0.3, width: 0.6, center: vec![0.1, 0.0] }), ChartBox::cube(3, 1.0), 0)
            .unwrap()
    }

    /// Rank-2 bundle with x-dependent, non-commuting first-order terms.
    fn nonabelian(m: usize) -> BundleModel {
        let a = Arc::new(move |x: &[f64]| {
            (0..m)
                .map(|nu| {
                    let s = 0.3 + 0.1 * nu as f64;
                    FibreMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(s * x[0], 0.0), c(0.2, 0.0), c(0.0, 0.0)]) * c(1.0, 0.0)
                        + FibreMatrix::from_row_slice(2, 2, &[c(0.1 * x[1], 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)])
                })
                .collect()
        });
        let b = Arc::new(|x: &[f64]| FibreMatrix::from_row_slice(2, 2, &[c(1.0 + x[0], 0.0), c(0.5, 0.0), c(0.0, 0.0), c(x[1] * x[1], 0.0)]));
        BundleModel::new(2, a, b, FibreMatrix::identity(2, 2), Arc::new(|_: &[f64]| FibreMatrix::identity(2, 2))).unwrap()
    }

    #[test]
    fn box_of_time_squared() {
        let p = WaveOperator::new(SpacetimeModel::minkowski(4, 1.0), BundleModel::trivial(4, 1));
        let f = |x: &[f64]| FibreVector::from_element(1, c(x[0] * x[0], 0.0));
        let v = p.apply(&f, &[0.1, 0.2, 0.3, 0.0]).unwrap();
        assert!((v[0] - c(2.0, 0.0)).norm() < 1e-9);
        let k = |_: &[f64]| FibreVector::from_element(1, c(3.0, 0.0));
        assert!(p.apply(&k, &[0.0; 4]).unwrap()[0].norm() < 1e-9);
    }

    #[test]
    fn rank_two_operator_matches_closed_form() {
        let model = SpacetimeModel::new(Arc::new(Conformal { m: 3, c: 1.0 }), ChartBox::cube(3, 1.0), 0).unwrap();
        let p = WaveOperator::new(model, nonabelian(3));
        // f = (sin t · x, e^{y}); closed-form derivatives below
        let f = |x: &[f64]| FibreVector::from_vec(vec![c(x[0].sin() * x[1], 0.0), c(x[2].exp(), 0.0)]);
        let x = [0.3f64, 0.2, -0.1];
        let a2 = (1.0 + x[0] * x[0]).powi(2);
        let (s, co) = (x[0].sin(), x[0].cos());
        let grad = [[co * x[1], x[2].exp() * 0.0], [s, 0.0], [0.0, x[2].exp()]];
        let box_ = [(-s * x[1]) / a2, -(x[2].exp()) / a2];
        let av = (nonabelian(3).a)(&x);
        let bv = (nonabelian(3).b)(&x);
        let fv = f(&x);
        let mut exact = &bv * &fv + FibreVector::from_vec(vec![c(box_[0], 0.0), c(box_[1], 0.0)]);
        for nu in 0..3 {
            exact += &av[nu] * FibreVector::from_vec(vec![c(grad[nu][0], 0.0), c(grad[nu][1], 0.0)]);
        }
        let got = p.apply(&f, &x).unwrap();
        assert!((got - exact).norm() <= 1e-7);
    }

    #[test]
    fn stencil_leaving_chart_is_an_error() {
        let p = WaveOperator::new(SpacetimeModel::minkowski(3, 1.0), BundleModel::trivial(3, 1));
        let f = |_: &[f64]| FibreVector::from_element(1, c(1.0, 0.0));
        assert!(matches!(p.apply(&f, &[0.999, 0.0, 0.0]), Err(BundleError::StencilOutOfChart(_))));
    }

    #[test]
    fn connection_identity_and_linearity_on_curved_metric() {
        let p = WaveOperator::new(bump3(), nonabelian(3));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let k: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let phi = move |x: &[f64]| (k[0] * x[0] + k[1] * x[1] * x[2]).sin() + k[2] * x[1];
            let f = move |x: &[f64]| FibreVector::from_vec(vec![c((k[3] * x[0]).cos(), k[4] * x[2]), c(x[1] * k[5], (x[0] + x[2]).exp())]);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let res = p.connection_identity_residual(&phi, &f, &x).unwrap();
            assert!(res <= 1e-6, "{res}");
            let v = [0.3, -0.2, 0.7];
            let w = [-0.1, 0.4, 0.2];
            let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
            let lhs = p.induced_connection(&vw, &f, &x).unwrap();
            let rhs = p.induced_connection(&v, &f, &x).unwrap() * c(2.0, 0.0) - p.induced_connection(&w, &f, &x).unwrap() * c(3.0, 0.0);
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn flat_trivial_connection_is_derivative() {
        let p = WaveOperator::new(SpacetimeModel::minkowski(3, 1.0), BundleModel::trivial(3, 1));
        let f = |x: &[f64]| FibreVector::from_element(1, c(x[1] * x[1], 0.0));
        let d = p.induced_connection(&[0.0, 1.0, 0.0], &f, &[0.0, 0.3, 0.0]).unwrap();
        assert!((d[0].re - 0.6).abs() < 1e-10);
    }

    #[test]
    fn gamma_invariance() {
        let p = WaveOperator::new(bump3(), nonabelian(3));
        let f = |x: &[f64]| FibreVector::from_vec(vec![c(x[0].sin(), 0.0), c(x[1] * x[2], 0.0)]);
        assert!(p.gamma_invariance_residual(&f, &[0.1, 0.2, 0.3]).unwrap() <= 1e-8);
    }

    #[test]
    fn transport_trivial_roundtrip_and_composition() {
        let model = bump3();
        let flat = WaveOperator::new(model.clone(), BundleModel::trivial(3, 1));
        let path = integrate_geodesic(&model, &[0.0, 0.0, 0.0], &[1.0, 0.3, 0.2], (0.0, 0.8), 1e-10).unwrap();
        let v0 = FibreVector::from_element(1, c(1.0, 0.5));
        let vs = parallel_transport(&flat, &path, &v0, 1e-11).unwrap();
        assert_eq!(vs.len(), path.samples.len());

        let p = WaveOperator::new(model.clone(), nonabelian(3));
        let v0 = FibreVector::from_vec(vec![c(1.0, 0.0), c(0.0, -1.0)]);
        let fwd = parallel_transport(&p, &path, &v0, 1e-12).unwrap();
        let end = path.end();
        let back_path = integrate_geodesic(&model, &end.x, &end.u, (end.t, 0.0), 1e-10).unwrap();
        let back = parallel_transport(&p, &back_path, fwd.last().unwrap(), 1e-12).unwrap();
        assert!((back.last().unwrap() - &v0).norm() <= 1e-8);

        let half = integrate_geodesic(&model, &[0.0; 3], &[1.0, 0.3, 0.2], (0.0, 0.4), 1e-10).unwrap();
        let mid = parallel_transport(&p, &half, &v0, 1e-12).unwrap();
        let hend = half.end();
        let rest = integrate_geodesic(&model, &hend.x, &hend.u, (0.4, 0.8), 1e-10).unwrap();
        let composed = parallel_transport(&p, &rest, mid.last().unwrap(), 1e-12).unwrap();
        assert!((composed.last().unwrap() - fwd.last().unwrap()).norm() <= 1e-8);

        let loose = parallel_transport(&p, &path, &v0, 1e-8).unwrap();
        assert!((loose.last().unwrap() - fwd.last().unwrap()).norm() <= 1e-6);
    }

    #[test]
    fn transport_preserves_form_for_antihermitean_coefficients() {
        let m = 3;
        let a = Arc::new(move |x: &[f64]| {
            (0..m)
                .map(|nu| {
                    let t = 0.4 + 0.2 * nu as f64 + x[0];
                    FibreMatrix::from_row_slice(2, 2, &[c(0.0, t), c(0.3, 0.1), c(-0.3, 0.1), c(0.0, -0.5)])
                })
                .collect()
        });
        let bundle = BundleModel::new(2, a, Arc::new(|_: &[f64]| FibreMatrix::zeros(2, 2)), FibreMatrix::identity(2, 2), Arc::new(|_: &[f64]| FibreMatrix::identity(2, 2)))
            .unwrap();
        let model = SpacetimeModel::minkowski(3, 2.0);
        let p = WaveOperator::new(model.clone(), bundle);
        let path = integrate_geodesic(&model, &[0.0; 3], &[1.0, 0.5, -0.3], (0.0, 1.0), 1e-10).unwrap();
        let v0 = FibreVector::from_vec(vec![c(0.6, 0.2), c(-0.1, 0.7)]);
        let vs = parallel_transport(&p, &path, &v0, 1e-12).unwrap();
        for v in &vs {
            assert!((v.norm() - v0.norm()).abs() <= 1e-8);
        }
    }
}
