//! Two-point function of the conformal vacuum on a conformally flat chart
//! `g = Ω²η`, paired with dilated Gaussians in momentum space.
//!
//! With `W_g(x, y) = Ω(x)^{−w} W_η(x, y) Ω(y)^{−w}` and `dvol = Ω^m dx`, the
//! pairing reduces to flat mode sums of `F·Ω^{m−w}`, whose Fourier transforms
//! are computed on the mass shell by Gauss–Hermite quadrature over the test
//! function, pushed through the exponential map of the probe.

use super::{ScaledPairing, ScalingError, ScalingProbe};
use crate::geometry::{GeometryError, JacobiRay, SpacetimeModel};
use crate::hadamard::{evaluate_distribution, Gaussian, HadamardError, PairingValue};
use crate::numerics::{linalg, quad, C64, MAX_DIM};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Relative weight below which Gauss–Hermite product nodes are dropped.
const PRUNE: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct MomentumPairing {
    model: SpacetimeModel,
    /// Conformal weight `w`: `(m−2)/2` for scalars.
    pub weight: f64,
    pub hermite: usize,
    pub radial: usize,
    pub angular: usize,
    /// ε schedule in units of the narrowest test-function width (and of λ),
    /// applied as `e^{−εω}`.
    pub eps_schedule: Vec<f64>,
    pub ode_tol: f64,
}

/// Mass-shell quadrature in rescaled momenta `κ = λk`: `(radius, unit
/// direction, weight of d^{m−1}κ/((2π)^{m−1}·2|κ|))`.
struct Shell {
    r: Vec<f64>,
    wr: Vec<f64>,
    dirs: Vec<Vec<f64>>,
    wd: Vec<f64>,
}

impl Shell {
    fn new(d: usize, radial: usize, angular: usize, r_max: f64) -> Self {
        let (r, w) = quad::gauss_legendre_on(radial, 0.0, r_max);
        // radial measure r^{d−1}/(2r)
        let wr = r.iter().zip(&w).map(|(r, w)| w * r.powi(d as i32 - 2) / 2.0).collect();
        let (dirs, mut wd): (Vec<Vec<f64>>, Vec<f64>) = match d {
            1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
            2 => (0..angular)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / angular as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / angular as f64)
                })
                .unzip(),
            _ => {
                let (ct, wt) = quad::gauss_legendre(angular / 2);
                let mut out = (vec![], vec![]);
                for (c, w) in ct.iter().zip(&wt) {
                    let s = (1.0 - c * c).sqrt();
                    for j in 0..angular {
                        let p = 2.0 * PI * j as f64 / angular as f64;
                        out.0.push(vec![*c, s * p.cos(), s * p.sin()]);
                        out.1.push(w * 2.0 * PI / angular as f64);
                    }
                }
                out
            }
        };
        let norm = (2.0 * PI).powi(d as i32);
        wd.iter_mut().for_each(|w| *w /= norm);
        Self { r, wr, dirs, wd }
    }
}

/// Quadrature of `∫ F_eff(x) e^{i a·x} dx` as `Σ weight·e^{i a·x}`.
struct Pushed {
    x: Vec<Vec<f64>>,
    w: Vec<f64>,
}

impl MomentumPairing {
    /// Conformally coupled massless scalar.
    pub fn conformal_scalar(model: SpacetimeModel) -> Self {
        let m = model.dim();
        let (hermite, radial, angular) = if m <= 3 { (16, 48, 64) } else { (12, 32, 24) };
        Self {
            weight: (m as f64 - 2.0) / 2.0,
            model,
            hermite,
            radial,
            angular,
            eps_schedule: vec![0.1, 0.05, 0.025, 0.0125],
            ode_tol: 1e-10,
        }
    }

    pub fn model(&self) -> &SpacetimeModel {
        &self.model
    }

    /// `Ω(x)`, checking that the metric is `Ω²η` there.
    fn omega(&self, x: &[f64]) -> Result<f64, ScalingError> {
        let m = self.model.dim();
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        self.model.metric_into(x, &mut g);
        let o2 = g[0];
        for i in 0..m {
            for j in 0..m {
                let eta = if i != j { 0.0 } else if i == 0 { 1.0 } else { -1.0 };
                if (g[i * m + j] - o2 * eta).abs() > 1e-12 * o2.abs() {
                    return Err(ScalingError::InvalidInput(format!("metric at {x:?} is not conformally flat in this chart")));
                }
            }
        }
        if o2 <= 0.0 {
            return Err(GeometryError::SignatureError(x.to_vec()).into());
        }
        Ok(o2.sqrt())
    }

    /// Quadrature nodes of `f` pushed to `exp_p(λEζ)` for every λ at once:
    /// one ray along `Eζ` sampled at `t = λ` gives the point and `∂x/∂ζ`.
    fn push(&self, probe: &ScalingProbe, lambdas: &[f64], f: &Gaussian, n: usize) -> Result<Vec<Pushed>, ScalingError> {
        let m = self.model.dim();
        if f.dim() != m || probe.dim() != m {
            return Err(ScalingError::InvalidInput("dimension mismatch".into()));
        }
        let (u, wu) = quad::gauss_hermite(n);
        let wmax = wu.iter().copied().fold(0.0, f64::max).powi(m as i32);
        let e = &probe.frame;
        let det_e = linalg::det(m, e).abs();
        let sigma = |i: usize| if i == 0 { f.sigma_t } else { f.sigma_x };
        let jac0: f64 = (0..m).map(|i| 2f64.sqrt() * sigma(i)).product::<f64>() * f.amplitude * det_e;
        let conformal_power = m as f64 - self.weight;
        let flat = self.model.is_flat_minkowski();
        // rays are integrated outwards, so the parameters must increase
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|a, b| lambdas[*a].total_cmp(&lambdas[*b]));
        let t_out: Vec<f64> = order.iter().map(|&i| lambdas[i]).collect();
        let multi: Vec<Vec<usize>> = (0..n.pow(m as u32))
            .map(|mut k| {
                (0..m)
                    .map(|_| {
                        let i = k % n;
                        k /= n;
                        i
                    })
                    .collect()
            })
            .filter(|idx: &Vec<usize>| idx.iter().map(|&i| wu[i]).product::<f64>() >= PRUNE * wmax)
            .collect();
        // per node: (x, |det ∂x/∂w|) at each sorted λ
        let nodes: Vec<(f64, Vec<(Vec<f64>, f64)>)> = multi
            .par_iter()
            .map(|idx| -> Result<_, ScalingError> {
                let zeta: Vec<f64> = (0..m).map(|i| f.center[i] + 2f64.sqrt() * sigma(i) * u[idx[i]]).collect();
                let w: Vec<f64> = (0..m).map(|mu| (0..m).map(|a| e[mu * m + a] * zeta[a]).sum::<f64>()).collect();
                let weight = idx.iter().map(|&i| wu[i]).product::<f64>() * jac0;
                let samples = if flat {
                    t_out
                        .iter()
                        .map(|t| (probe.center.iter().zip(&w).map(|(p, v)| p + t * v).collect(), t.powi(m as i32)))
                        .collect()
                } else {
                    let ray = JacobiRay::shoot(&self.model, &probe.center, &w, &t_out, self.ode_tol)?;
                    if ray.chart_exit || ray.samples.len() != t_out.len() {
                        return Err(ScalingError::SupportEscape { lambda: t_out[ray.samples.len().min(t_out.len() - 1)] });
                    }
                    ray.samples.iter().map(|s| (s.x.clone(), linalg::det(m, &s.d).abs())).collect()
                };
                Ok((weight, samples))
            })
            .collect::<Result<_, _>>()?;
        let mut out: Vec<Pushed> = lambdas.iter().map(|_| Pushed { x: vec![], w: vec![] }).collect();
        for (weight, samples) in nodes {
            for (k, (x, det_d)) in samples.into_iter().enumerate() {
                let slot = order[k];
                if !self.model.chart().contains(&x) {
                    return Err(ScalingError::SupportEscape { lambda: lambdas[slot] });
                }
                let omega = self.omega(&x)?;
                let p = &mut out[slot];
                p.w.push(weight * det_d * omega.powf(conformal_power) * lambdas[slot].powf(-probe.alpha));
                p.x.push(x);
            }
        }
        Ok(out)
    }

    /// `∫∫ F(x) G_ε(x, y) F′(y)` at every ε of the schedule for one λ and
    /// one resolution. `slot1` multiplies the first transform by a function
    /// of the rescaled frequency `κ = λa` of the first slot.
    #[allow(clippy::too_many_arguments)]
    fn mode_sum(
        &self,
        probe: &ScalingProbe,
        lambda: f64,
        a: &Pushed,
        b: &Pushed,
        shell: &Shell,
        eps: &[f64],
        slot1: &(dyn Fn(&[f64]) -> C64 + Sync),
    ) -> Vec<C64> {
        let m = self.model.dim();
        // Φ(a) = Σ w e^{i a·x} with a = (r/λ)(1, −n̂) in the first slot and −a in the second
        let per_dir: Vec<Vec<C64>> = shell
            .dirs
            .par_iter()
            .zip(&shell.wd)
            .map(|(n, wd)| {
                let phase = |x: &[f64]| (x[0] - probe.center[0] - n.iter().zip(&x[1..]).zip(&probe.center[1..]).map(|((n, x), c)| n * (x - c)).sum::<f64>()) / lambda;
                let ya: Vec<f64> = a.x.iter().map(|x| phase(x)).collect();
                let yb: Vec<f64> = b.x.iter().map(|x| phase(x)).collect();
                let mut acc = vec![C64::new(0.0, 0.0); eps.len()];
                for (r, wr) in shell.r.iter().zip(&shell.wr) {
                    let fa: C64 = ya.iter().zip(&a.w).map(|(y, w)| C64::from_polar(*w, r * y)).sum();
                    let fb: C64 = yb.iter().zip(&b.w).map(|(y, w)| C64::from_polar(*w, -r * y)).sum();
                    let kappa: Vec<f64> = std::iter::once(*r).chain(n.iter().map(|v| -r * v)).collect();
                    let term = fa * fb * slot1(&kappa) * (wr * wd);
                    for (acc, e) in acc.iter_mut().zip(eps) {
                        *acc += term * (-e * r).exp();
                    }
                }
                acc
            })
            .collect();
        let pre = 2.0 * lambda.powf(2.0 - m as f64);
        (0..eps.len()).map(|i| per_dir.iter().map(|v| v[i]).sum::<C64>() * pre).collect()
    }

    /// Scaled pairings along `lambdas` with a first-slot multiplier that may
    /// depend on λ; the quadrature error is the gap to a coarser resolution.
    pub fn sequence_with(
        &self,
        probe: &ScalingProbe,
        lambdas: &[f64],
        f: &Gaussian,
        f2: &Gaussian,
        slot1: &(dyn Fn(f64, &[f64]) -> C64 + Sync),
    ) -> Result<Vec<PairingValue>, ScalingError> {
        for &l in lambdas {
            probe.check_lambda(l)?;
        }
        let m = self.model.dim();
        let scale = f.sigma_t.min(f.sigma_x).min(f2.sigma_t).min(f2.sigma_x);
        let sched: Vec<f64> = self.eps_schedule.iter().map(|e| e * scale).collect();
        let spread: f64 = [f.sigma_t, f.sigma_x, f2.sigma_t, f2.sigma_x].iter().map(|s| s * s).sum();
        let r_max = (72.0 / spread).sqrt();
        let mut per_level = vec![];
        for (nh, nr, na) in [(self.hermite, self.radial, self.angular), (self.hermite - 4, self.radial * 3 / 4, self.angular * 3 / 4)] {
            let a = self.push(probe, lambdas, f, nh)?;
            let b = self.push(probe, lambdas, f2, nh)?;
            let shell = Shell::new(m - 1, nr, na, r_max);
            per_level.push(
                lambdas
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| self.mode_sum(probe, l, &a[i], &b[i], &shell, &sched, &|k: &[f64]| slot1(l, k)))
                    .collect::<Vec<_>>(),
            );
        }
        (0..lambdas.len())
            .map(|i| {
                let (hi, lo) = (&per_level[0][i], &per_level[1][i]);
                let lookup = |e: f64| -> Result<(C64, f64), HadamardError> {
                    let k = sched.iter().position(|s| *s == e).expect("schedule entry");
                    Ok((hi[k], (hi[k] - lo[k]).norm()))
                };
                Ok(evaluate_distribution(lookup, &sched, None)?)
            })
            .collect()
    }
}

impl ScaledPairing for MomentumPairing {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn scaled(&self, probe: &ScalingProbe, lambda: f64, f: &Gaussian, f2: &Gaussian) -> Result<PairingValue, ScalingError> {
        Ok(self.sequence(probe, &[lambda], f, f2)?.remove(0))
    }

    fn sequence(&self, probe: &ScalingProbe, lambdas: &[f64], f: &Gaussian, f2: &Gaussian) -> Result<Vec<PairingValue>, ScalingError> {
        self.sequence_with(probe, lambdas, f, f2, &|_, _| C64::new(1.0, 0.0))
    }
}
