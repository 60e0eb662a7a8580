//! Hadamard coefficients `U_k(x, y)` along geodesic rays `x(t) = exp_y(tW)`.
//!
//! With the calibrated `M`, the recursion along a ray reads
//! `2t dU_k/dt + (M + 2k) U_k + P U_{k−1} = 0` (covariant `d/dt`), solved by
//! `U_0 = Π Δ^{1/2}` and
//! `U_k(t) = −½ Π(t) Δ^{1/2}(t) ∫_0^1 σ^{k−1} Δ^{−1/2}(tσ) Π^{-1}(tσ) (P U_{k−1})(tσ) dσ`,
//! where `Π` is parallel transport of the fibre along the ray.
//!
//! `P U_{k−1}` is taken by finite differences in normal coordinates
//! `w = t W′`, over the lattice of neighbouring rays `W′ = W + δ n`
//! (`n ∈ ℤ^m`). At parameter `t` the lattice spacing in `w` is `tδ`, so the
//! same rays serve every `t`, and each ray is integrated once.

use super::HadamardError;
use crate::bundle::{FibreMatrix, WaveOperator};
use crate::geometry::geodesic::jacobi_rhs;
use crate::numerics::{fd, linalg, ode, quad, C64, MAX_DIM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    /// Relative lattice spacing of the fan of neighbouring rays.
    pub delta: f64,
    /// Gauss–Legendre nodes for the `σ` integral.
    pub n_sigma: usize,
    /// Fixed integration step as a fraction of the longest parameter.
    pub step_fraction: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self { delta: 1e-2, n_sigma: 8, step_fraction: 1.0 / 64.0 }
    }
}

/// Coefficients sampled along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTable {
    pub w: Vec<f64>,
    pub t: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub sqrt_van_vleck: Vec<f64>,
    /// `u[k][i]` is `U_k` at `points[i]`.
    pub u: Vec<Vec<FibreMatrix>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub base: Vec<f64>,
    pub order: usize,
    pub rank: usize,
    pub rays: Vec<RayTable>,
}

impl CoefficientTable {
    /// `U_0(y, y)`: the identity by the initial condition.
    pub fn coincidence_u0(&self) -> FibreMatrix {
        FibreMatrix::identity(self.rank, self.rank)
    }

    pub fn is_finite(&self) -> bool {
        self.rays.iter().all(|r| r.u.iter().flatten().all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite())))
    }
}

/// Solves the recursion up to order `order` on each ray `W ∈ rays`, sampled
/// at the parameters `t_samples` (increasing, positive).
pub fn transport_coefficients(
    op: &WaveOperator,
    y: &[f64],
    rays: &[Vec<f64>],
    t_samples: &[f64],
    order: usize,
    opts: &TransportOptions,
) -> Result<CoefficientTable, HadamardError> {
    let m = op.base.dim();
    if y.len() != m || rays.iter().any(|w| w.len() != m) {
        return Err(HadamardError::InvalidInput("dimension mismatch".into()));
    }
    if t_samples.is_empty() || t_samples[0] <= 0.0 || t_samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HadamardError::InvalidInput("t samples must be positive and increasing".into()));
    }
    let tables = rays
        .par_iter()
        .map(|w| {
            let mut fan = Fan::new(op, y, w, t_samples, order, opts);
            let origin = vec![0i32; m];
            let mut u = Vec::with_capacity(order + 1);
            for k in 0..=order {
                u.push(fan.u_values(&origin, k, 0)?.as_ref().clone());
            }
            let geom = fan.ray(&origin)?;
            let mut points = Vec::new();
            let mut vv = Vec::new();
            for &t in t_samples {
                let i = fan.index[&t.to_bits()];
                points.push(geom.x(&fan, i));
                vv.push(geom.sqrt_vv(i));
            }
            Ok(RayTable { w: w.clone(), t: t_samples.to_vec(), points, sqrt_van_vleck: vv, u })
        })
        .collect::<Result<Vec<_>, HadamardError>>()?;
    Ok(CoefficientTable { base: y.to_vec(), order, rank: op.bundle.r, rays: tables })
}

/// Geometry of one fan ray at every parameter in `Fan::all_tau`.
enum RayGeom {
    /// Straight ray in Minkowski space with trivial fibre transport.
    Flat { w: Vec<f64> },
    Curved { x: Vec<f64>, jac: Vec<f64>, vv: Vec<f64>, pi: Vec<FibreMatrix> },
}

impl RayGeom {
    fn x(&self, fan: &Fan, i: usize) -> Vec<f64> {
        let m = fan.m;
        match self {
            RayGeom::Flat { w } => fan.y.iter().zip(w).map(|(a, b)| a + fan.all_tau[i] * b).collect(),
            RayGeom::Curved { x, .. } => x[i * m..(i + 1) * m].to_vec(),
        }
    }

    /// `J = ∂x/∂w` (row-major `J[λ*m + a]`).
    fn jac(&self, m: usize, i: usize) -> Vec<f64> {
        match self {
            RayGeom::Flat { .. } => {
                let mut j = vec![0.0; m * m];
                for a in 0..m {
                    j[a * m + a] = 1.0;
                }
                j
            }
            RayGeom::Curved { jac, .. } => jac[i * m * m..(i + 1) * m * m].to_vec(),
        }
    }

    fn sqrt_vv(&self, i: usize) -> f64 {
        match self {
            RayGeom::Flat { .. } => 1.0,
            RayGeom::Curved { vv, .. } => vv[i],
        }
    }

    fn pi(&self, r: usize, i: usize) -> FibreMatrix {
        match self {
            RayGeom::Flat { .. } => FibreMatrix::identity(r, r),
            RayGeom::Curved { pi, .. } => pi[i].clone(),
        }
    }
}

type Key = (Vec<i32>, usize, usize);

struct Fan<'a> {
    op: &'a WaveOperator,
    m: usize,
    r: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    delta: f64,
    sigma: Vec<f64>,
    sigma_w: Vec<f64>,
    /// `levels[d]`: parameters at which values of depth `d` are needed.
    levels: Vec<Vec<f64>>,
    all_tau: Vec<f64>,
    index: HashMap<u64, usize>,
    h_max: f64,
    analytic: bool,
    rays: HashMap<Vec<i32>, Arc<RayGeom>>,
    values: HashMap<Key, Arc<Vec<FibreMatrix>>>,
}

impl<'a> Fan<'a> {
    fn new(op: &'a WaveOperator, y: &[f64], w: &[f64], t_samples: &[f64], order: usize, opts: &TransportOptions) -> Self {
        let (sigma, sigma_w) = quad::gauss_legendre_on(opts.n_sigma, 0.0, 1.0);
        let mut levels = vec![t_samples.to_vec()];
        for d in 0..order {
            let next: Vec<f64> = levels[d].iter().flat_map(|t| sigma.iter().map(move |s| t * s)).collect();
            levels.push(next);
        }
        let mut all_tau: Vec<f64> = levels.iter().flatten().copied().collect();
        all_tau.sort_by(|a, b| a.total_cmp(b));
        all_tau.dedup();
        let index = all_tau.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect();
        let t_max = *t_samples.last().expect("non-empty");
        Self {
            op,
            m: op.base.dim(),
            r: op.bundle.r,
            y: y.to_vec(),
            w: w.to_vec(),
            delta: opts.delta,
            sigma,
            sigma_w,
            levels,
            all_tau,
            index,
            h_max: t_max * opts.step_fraction,
            analytic: op.base.is_flat_minkowski() && op.bundle.a_vanishes,
            rays: HashMap::new(),
            values: HashMap::new(),
        }
    }

    fn ray(&mut self, n: &[i32]) -> Result<Arc<RayGeom>, HadamardError> {
        if let Some(g) = self.rays.get(n) {
            return Ok(g.clone());
        }
        let m = self.m;
        let w: Vec<f64> = self.w.iter().zip(n).map(|(a, k)| a + self.delta * *k as f64).collect();
        let geom = if self.analytic {
            RayGeom::Flat { w }
        } else {
            self.integrate_ray(n, &w)?
        };
        let geom = Arc::new(geom);
        if let RayGeom::Flat { .. } = geom.as_ref() {
            let end = geom.x(self, self.all_tau.len() - 1);
            if !self.op.base.chart().contains(&end) {
                return Err(HadamardError::FanTooNarrow { offset: n.to_vec() });
            }
        }
        debug_assert_eq!(m, n.len());
        self.rays.insert(n.to_vec(), geom.clone());
        Ok(geom)
    }

    fn integrate_ray(&self, n: &[i32], w: &[f64]) -> Result<RayGeom, HadamardError> {
        let m = self.m;
        let r = self.r;
        let mm = m * m;
        let base = &self.op.base;
        let geo_len = 2 * m + 2 * mm;
        let mut y0 = vec![0.0; geo_len + 2 * r * r];
        y0[..m].copy_from_slice(&self.y);
        y0[m..2 * m].copy_from_slice(w);
        for a in 0..m {
            y0[2 * m + mm + a * m + a] = 1.0;
            // D(0) = 0, Ḋ(0) = 1
        }
        for a in 0..r {
            y0[geo_len + 2 * (a * r + a)] = 1.0;
        }
        let op = self.op;
        let chart = base.chart().clone();
        let rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
            let x = &s[..m];
            if !chart.contains(x) {
                ds.iter_mut().for_each(|v| *v = f64::NAN);
                return;
            }
            jacobi_rhs(base, &s[..geo_len], &mut ds[..geo_len]);
            let omega = op.connection_form(x);
            let u = &s[m..2 * m];
            let mut a = FibreMatrix::zeros(r, r);
            for (nu, un) in u.iter().enumerate() {
                a += &omega[nu] * C64::new(*un, 0.0);
            }
            let pi = FibreMatrix::from_fn(r, r, |i, j| C64::new(s[geo_len + 2 * (i * r + j)], s[geo_len + 2 * (i * r + j) + 1]));
            let d = -(a * pi);
            for i in 0..r {
                for j in 0..r {
                    ds[geo_len + 2 * (i * r + j)] = d[(i, j)].re;
                    ds[geo_len + 2 * (i * r + j) + 1] = d[(i, j)].im;
                }
            }
        };
        let states = ode::integrate_fixed(rhs, 0.0, &y0, &self.all_tau, self.h_max)
            .map_err(|_| HadamardError::FanTooNarrow { offset: n.to_vec() })?;
        let nt = self.all_tau.len();
        let mut x = Vec::with_capacity(nt * m);
        let mut jac = Vec::with_capacity(nt * mm);
        let mut vv = Vec::with_capacity(nt);
        let mut pi = Vec::with_capacity(nt);
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        base.metric_into(&self.y, &mut g);
        let gy = linalg::det(m, &g[..mm]).abs();
        for (i, s) in states.iter().enumerate() {
            let t = self.all_tau[i];
            let xi = &s[..m];
            if !chart.contains(xi) {
                return Err(HadamardError::FanTooNarrow { offset: n.to_vec() });
            }
            x.extend_from_slice(xi);
            let j: Vec<f64> = s[2 * m..2 * m + mm].iter().map(|v| v / t).collect();
            base.metric_into(xi, &mut g);
            let gx = linalg::det(m, &g[..mm]).abs();
            vv.push((gy.sqrt() / (gx.sqrt() * linalg::det(m, &j).abs())).sqrt());
            jac.extend(j);
            pi.push(FibreMatrix::from_fn(r, r, |a, b| C64::new(s[geo_len + 2 * (a * r + b)], s[geo_len + 2 * (a * r + b) + 1])));
        }
        Ok(RayGeom::Curved { x, jac, vv, pi })
    }

    /// `U_k` on ray `n` at every parameter of `levels[d]`.
    fn u_values(&mut self, n: &[i32], k: usize, d: usize) -> Result<Arc<Vec<FibreMatrix>>, HadamardError> {
        let key = (n.to_vec(), k, d);
        if let Some(v) = self.values.get(&key) {
            return Ok(v.clone());
        }
        let geom = self.ray(n)?;
        let taus = self.levels[d].clone();
        let out: Vec<FibreMatrix> = if k == 0 {
            taus.iter()
                .map(|t| {
                    let i = self.index[&t.to_bits()];
                    geom.pi(self.r, i) * C64::new(geom.sqrt_vv(i), 0.0)
                })
                .collect()
        } else {
            let src = self.source(n, k - 1, d + 1)?;
            let ns = self.sigma.len();
            let sub = &self.levels[d + 1];
            taus.iter()
                .enumerate()
                .map(|(a, t)| {
                    let i = self.index[&t.to_bits()];
                    let mut acc = FibreMatrix::zeros(self.r, self.r);
                    for q in 0..ns {
                        let j = self.index[&sub[a * ns + q].to_bits()];
                        let pinv = geom.pi(self.r, j).try_inverse().unwrap_or_else(|| FibreMatrix::identity(self.r, self.r));
                        let weight = self.sigma_w[q] * self.sigma[q].powi(k as i32 - 1) / geom.sqrt_vv(j);
                        acc += pinv * &src[a * ns + q] * C64::new(weight, 0.0);
                    }
                    geom.pi(self.r, i) * acc * C64::new(-0.5 * geom.sqrt_vv(i), 0.0)
                })
                .collect()
        };
        let out = Arc::new(out);
        self.values.insert(key, out.clone());
        Ok(out)
    }

    /// `(P U_k)` on ray `n` at every parameter of `levels[d]`.
    fn source(&mut self, n: &[i32], k: usize, d: usize) -> Result<Vec<FibreMatrix>, HadamardError> {
        let m = self.m;
        let r = self.r;
        let mm = m * m;
        let shifted = |axes: &[(usize, i32)]| {
            let mut v = n.to_vec();
            for &(a, o) in axes {
                v[a] += o;
            }
            v
        };
        let offs = [-2i32, -1, 1, 2];
        let center = self.u_values(n, k, d)?;
        let mut axis_vals: Vec<Vec<Arc<Vec<FibreMatrix>>>> = Vec::with_capacity(m);
        let mut axis_rays: Vec<Vec<Arc<RayGeom>>> = Vec::with_capacity(m);
        for a in 0..m {
            let mut vs = Vec::new();
            let mut rs = Vec::new();
            for &o in &offs {
                let nn = shifted(&[(a, o)]);
                vs.push(self.u_values(&nn, k, d)?);
                rs.push(self.ray(&nn)?);
            }
            axis_vals.push(vs);
            axis_rays.push(rs);
        }
        let mut mixed: HashMap<(usize, usize), Vec<Arc<Vec<FibreMatrix>>>> = HashMap::new();
        for a in 0..m {
            for b in a + 1..m {
                let mut vs = Vec::with_capacity(16);
                for &oa in &offs {
                    for &ob in &offs {
                        vs.push(self.u_values(&shifted(&[(a, oa), (b, ob)]), k, d)?);
                    }
                }
                mixed.insert((a, b), vs);
            }
        }
        let geom = self.ray(n)?;
        let base = &self.op.base;
        let d1: Vec<f64> = fd::D1.iter().map(|p| p.1).collect();
        let d2: Vec<f64> = fd::D2.iter().filter(|p| p.0 != 0.0).map(|p| p.1).collect();
        let taus = self.levels[d].clone();
        let mut out = Vec::with_capacity(taus.len());
        for (ia, t) in taus.iter().enumerate() {
            let i = self.index[&t.to_bits()];
            let h = t * self.delta;
            let x = geom.x(self, i);
            let u0 = &center[ia];
            let diff = |v: &FibreMatrix| v - u0;
            let mut du = vec![FibreMatrix::zeros(r, r); m];
            let mut ddu = vec![FibreMatrix::zeros(r, r); mm];
            let mut djac = vec![0.0; m * mm];
            let j0 = geom.jac(m, i);
            for a in 0..m {
                for (q, wq) in d1.iter().enumerate() {
                    du[a] += diff(&axis_vals[a][q][ia]) * C64::new(wq / h, 0.0);
                    ddu[a * m + a] += diff(&axis_vals[a][q][ia]) * C64::new(d2[q] / (h * h), 0.0);
                    let jq = axis_rays[a][q].jac(m, i);
                    for e in 0..mm {
                        djac[a * mm + e] += wq * (jq[e] - j0[e]) / h;
                    }
                }
            }
            for ((a, b), vs) in &mixed {
                let mut acc = FibreMatrix::zeros(r, r);
                for (qa, wa) in d1.iter().enumerate() {
                    for (qb, wb) in d1.iter().enumerate() {
                        acc += diff(&vs[qa * 4 + qb][ia]) * C64::new(wa * wb / (h * h), 0.0);
                    }
                }
                ddu[b * m + a] = acc.clone();
                ddu[a * m + b] = acc;
            }
            let mut jinv = [0.0; MAX_DIM * MAX_DIM];
            linalg::invert(m, &j0, &mut jinv).ok_or(HadamardError::FanTooNarrow { offset: n.to_vec() })?;
            let mut ginv = [0.0; MAX_DIM * MAX_DIM];
            base.inverse_metric_into(&x, &mut ginv);
            let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
            base.christoffel_into(&x, &mut gam);
            // metric of the w-chart, inverse
            let mut gw = vec![0.0; mm];
            for p in 0..m {
                for q in 0..m {
                    let mut acc = 0.0;
                    for mu in 0..m {
                        for nu in 0..m {
                            acc += jinv[p * m + mu] * ginv[mu * m + nu] * jinv[q * m + nu];
                        }
                    }
                    gw[p * m + q] = acc;
                }
            }
            // Γ̃^c_{ab} = J^{-1}{}^c_λ (∂_a J^λ_b + Γ^λ_{μν} J^μ_a J^ν_b)
            let mut gam_w = vec![0.0; m * mm];
            for a in 0..m {
                for b in 0..m {
                    let mut second = vec![0.0; m];
                    for (l, sl) in second.iter_mut().enumerate() {
                        let mut acc = 0.5 * (djac[a * mm + l * m + b] + djac[b * mm + l * m + a]);
                        for mu in 0..m {
                            for nu in 0..m {
                                acc += gam[l * mm + mu * m + nu] * j0[mu * m + a] * j0[nu * m + b];
                            }
                        }
                        *sl = acc;
                    }
                    for c in 0..m {
                        gam_w[c * mm + a * m + b] = (0..m).map(|l| jinv[c * m + l] * second[l]).sum();
                    }
                }
            }
            let gc = base.contracted_christoffel(&x);
            let amat = (self.op.bundle.a)(&x);
            let id = FibreMatrix::identity(r, r);
            let first: Vec<FibreMatrix> = (0..m).map(|l| &amat[l] + &id * C64::new(gc[l], 0.0)).collect();
            let mut pu = (self.op.bundle.b)(&x) * u0;
            for a in 0..m {
                for b in 0..m {
                    let gab = gw[a * m + b];
                    if gab == 0.0 {
                        continue;
                    }
                    let mut term = ddu[a * m + b].clone();
                    for c in 0..m {
                        let gc_ab = gam_w[c * mm + a * m + b];
                        if gc_ab != 0.0 {
                            term -= &du[c] * C64::new(gc_ab, 0.0);
                        }
                    }
                    pu += term * C64::new(gab, 0.0);
                }
            }
            for c in 0..m {
                let mut vc = FibreMatrix::zeros(r, r);
                for l in 0..m {
                    vc += &first[l] * C64::new(jinv[c * m + l], 0.0);
                }
                pu += vc * &du[c];
            }
            out.push(pu);
        }
        Ok(out)
    }
}
