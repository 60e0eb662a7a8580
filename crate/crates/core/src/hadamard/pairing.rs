//! Distributional pairings `lim_{ε→0+} ∫∫ f(p) G_ε(p, q) f′(q) dp dq`,
//! evaluated per ε by quadrature and extrapolated in ε.

use super::riesz::{parametrix_terms, RadialGaussPoly, RieszValue};
use super::{kernel_constants, pochhammer_even, CoefficientEvaluator, HadamardError, HadamardSeries, SeriesSpec, TimeFunction};
use super::kernel::{regularized_argument, regularized_log, regularized_power};
use crate::geometry::SpacetimeModel;
use crate::numerics::{quad, richardson, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Mutex;

/// Product Gaussian test function, width `sigma_t` along the time axis 0 and
/// `sigma_x` along the spatial axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: Vec<f64>,
    pub sigma_t: f64,
    pub sigma_x: f64,
    pub amplitude: f64,
}

impl Gaussian {
    pub fn isotropic(center: &[f64], sigma: f64, amplitude: f64) -> Self {
        Self { center: center.to_vec(), sigma_t: sigma, sigma_x: sigma, amplitude }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let e: f64 = x
            .iter()
            .zip(&self.center)
            .enumerate()
            .map(|(i, (v, c))| {
                let s = if i == 0 { self.sigma_t } else { self.sigma_x };
                (v - c).powi(2) / (2.0 * s * s)
            })
            .sum();
        self.amplitude * (-e).exp()
    }

    pub fn l1(&self) -> f64 {
        let m = self.dim() as f64;
        self.amplitude.abs() * (2.0 * PI).powf(m / 2.0) * self.sigma_t * self.sigma_x.powf(m - 1.0)
    }

    /// `h(z) = ∫ self(p) other(p + z) dp`.
    pub fn cross_correlation(&self, other: &Gaussian) -> RadialGaussPoly {
        let m = self.dim();
        let st2 = self.sigma_t.powi(2) + other.sigma_t.powi(2);
        let sx2 = self.sigma_x.powi(2) + other.sigma_x.powi(2);
        let ct = (2.0 * PI * self.sigma_t.powi(2) * other.sigma_t.powi(2) / st2).sqrt();
        let cx = (2.0 * PI * self.sigma_x.powi(2) * other.sigma_x.powi(2) / sx2).sqrt();
        let center: Vec<f64> = other.center.iter().zip(&self.center).map(|(b, a)| b - a).collect();
        let amp = self.amplitude * other.amplitude * ct * cx.powi(m as i32 - 1);
        RadialGaussPoly::gaussian(m, &center, st2.sqrt(), sx2.sqrt(), amp)
    }

    /// `x ↦ self(x/λ)`, amplitude unchanged.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self {
            center: self.center.iter().map(|c| c * lambda).collect(),
            sigma_t: self.sigma_t * lambda,
            sigma_x: self.sigma_x * lambda,
            amplitude: self.amplitude,
        }
    }
}

/// Extrapolated pairing with its error budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingValue {
    pub value: C64,
    pub error: f64,
    /// `(ε, value)` along the schedule.
    pub per_eps: Vec<(f64, C64)>,
    /// Quadrature part of `error`, amplified by the extrapolation weights.
    pub quad_error: f64,
}

impl PairingValue {
    fn combine(a: &PairingValue, b: &PairingValue, ca: f64, cb: f64) -> PairingValue {
        PairingValue {
            value: a.value * ca + b.value * cb,
            error: ca.abs() * a.error + cb.abs() * b.error,
            per_eps: a.per_eps.iter().zip(&b.per_eps).map(|((e, x), (_, y))| (*e, x * ca + y * cb)).collect(),
            quad_error: ca.abs() * a.quad_error + cb.abs() * b.quad_error,
        }
    }
}

/// Evaluates `at_eps` (value, quadrature error) along the schedule and
/// extrapolates to `ε = 0` assuming integer powers of ε.
pub fn evaluate_distribution<F>(at_eps: F, eps_schedule: &[f64], tol: Option<f64>) -> Result<PairingValue, HadamardError>
where
    F: Fn(f64) -> Result<(C64, f64), HadamardError> + Sync,
{
    if eps_schedule.len() < 2 {
        return Err(HadamardError::InvalidInput("at least two ε values are needed".into()));
    }
    let ratio = eps_schedule[0] / eps_schedule[1];
    if eps_schedule.windows(2).any(|w| !(w[1] > 0.0 && w[1] < w[0]) || ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-9) {
        return Err(HadamardError::InvalidInput("ε schedule must be geometric and decreasing".into()));
    }
    let results: Vec<(C64, f64)> = eps_schedule.par_iter().map(|&e| at_eps(e)).collect::<Result<_, _>>()?;
    let values: Vec<C64> = results.iter().map(|r| r.0).collect();
    let n = values.len();
    // the extrapolation is linear; its weights bound how quadrature errors propagate
    let floor: f64 = (0..n)
        .map(|i| {
            let unit: Vec<C64> = (0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect();
            richardson::extrapolate(eps_schedule, &unit, 1, 0.0).value.norm() * results[i].1
        })
        .sum();
    let ex = richardson::extrapolate(eps_schedule, &values, 1, floor);
    if let Some(t) = tol {
        if ex.error > t {
            return Err(HadamardError::NonConvergent { error: ex.error, tol: t });
        }
    }
    Ok(PairingValue {
        value: ex.value,
        error: ex.error,
        per_eps: eps_schedule.iter().copied().zip(values).collect(),
        quad_error: floor,
    })
}

/// Flat-space kernel `P(s)·z^{1−m/2} + L(s)·log z`, `z = s − 2iεΔt + ε²`,
/// with polynomials `P`, `L` in the world function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatKernel {
    pub m: usize,
    pub power: Vec<f64>,
    pub log: Vec<f64>,
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * s + v)
}

impl FlatKernel {
    /// `β1 z^{1−m/2}`.
    pub fn g1(m: usize) -> Self {
        Self { m, power: vec![kernel_constants(m).beta1], log: vec![] }
    }

    /// `β2 log z`, even `m` only.
    pub fn g2(m: usize) -> Result<Self, HadamardError> {
        let b = kernel_constants(m).beta2.ok_or(HadamardError::BadParity { what: "G^(2)", m })?;
        Ok(Self { m, power: vec![], log: vec![b] })
    }

    /// The full regularized kernel of a truncated series with scalar,
    /// position-independent coefficients.
    pub fn from_series(spec: &SeriesSpec, coeffs: &dyn CoefficientEvaluator) -> Result<Self, HadamardError> {
        let (p, l) = Self::parts(spec, coeffs)?;
        Ok(Self { m: spec.m, power: p, log: l })
    }

    /// The `G^(1)` part of [`FlatKernel::from_series`].
    pub fn g1_from_series(spec: &SeriesSpec, coeffs: &dyn CoefficientEvaluator) -> Result<Self, HadamardError> {
        let (p, _) = Self::parts(spec, coeffs)?;
        Ok(Self { m: spec.m, power: p, log: vec![] })
    }

    fn parts(spec: &SeriesSpec, coeffs: &dyn CoefficientEvaluator) -> Result<(Vec<f64>, Vec<f64>), HadamardError> {
        if coeffs.rank() != 1 {
            return Err(HadamardError::InvalidInput("scalar coefficients expected".into()));
        }
        let m = spec.m;
        let series = HadamardSeries::new(m, spec.n);
        let origin = vec![0.0; m];
        let u: Vec<f64> = coeffs.coefficients(&origin, &origin, series.required_order())?.iter().map(|c| c[(0, 0)].re).collect();
        let b = kernel_constants(m);
        let top = if series.is_even() { (m - 4) / 2 } else { series.required_order() };
        let power = (0..=top).map(|k| b.beta1 * u[k] / pochhammer_even(4.0 - m as f64, k)).collect();
        let mut log = vec![];
        if let Some(b2) = b.beta2 {
            let pre = pochhammer_even(2.0, m / 2 - 1);
            let mut fact = 1.0;
            for k in 0..=spec.n {
                if k > 0 {
                    fact *= 2.0 * k as f64;
                }
                log.push(b2 * pre * u[(m - 2) / 2 + k] / fact);
            }
        }
        Ok((power, log))
    }

    pub fn eval(&self, s: f64, dt: f64, eps: f64) -> Result<C64, HadamardError> {
        let z = regularized_argument(s, dt, eps);
        let mut out = C64::new(0.0, 0.0);
        if !self.power.is_empty() {
            out += regularized_power(self.m, z)? * horner(&self.power, s);
        }
        if !self.log.is_empty() {
            out += regularized_log(z)? * horner(&self.log, s);
        }
        Ok(out)
    }

    fn magnitude(&self) -> f64 {
        self.power.iter().chain(&self.log).map(|c| c.abs()).sum::<f64>().max(f64::MIN_POSITIVE)
    }
}

/// Pairings of Gaussian test functions against a [`FlatKernel`] in flat
/// Minkowski space, time function `x₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPairing {
    pub kernel: FlatKernel,
    pub rel_tol: f64,
    pub max_segments: usize,
}

fn sorted_points(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut p = vec![lo, hi];
    p.extend(extra.iter().copied().filter(|x| *x > lo && *x < hi));
    p.sort_by(|a, b| a.total_cmp(b));
    p.dedup();
    p
}

impl FlatPairing {
    pub fn new(kernel: FlatKernel) -> Self {
        Self { kernel, rel_tol: 1e-10, max_segments: 600 }
    }

    /// `∫ h(z) K_ε(z) dz` for one ε, with `z = q − p`, `Δt = −z₀`.
    pub fn at_eps(&self, h: &RadialGaussPoly, eps: f64) -> Result<(C64, f64), HadamardError> {
        let m = self.kernel.m;
        if h.m != m {
            return Err(HadamardError::InvalidInput("dimension mismatch".into()));
        }
        let (t_lo, t_hi) = h.time_window();
        let (r_lo, r_hi) = h.radial_window();
        let rho = h.center[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        let abs_tol = 1e-12 * h.l1_bound() * self.kernel.magnitude();
        let inner_tol = abs_tol / (t_hi - t_lo);
        let failure = Mutex::new(None);
        let fail = |e: HadamardError| {
            failure.lock().expect("poisoned").get_or_insert(e);
            C64::new(0.0, 0.0)
        };
        let inner = |z0: f64| -> C64 {
            let pts = sorted_points(r_lo, r_hi, &[z0.abs(), rho]);
            quad::adaptive(
                |r| match self.kernel.eval(r * r - z0 * z0, -z0, eps) {
                    Ok(k) => k * (r.powi(m as i32 - 2) * h.angular(z0, r)),
                    Err(e) => fail(e),
                },
                &pts,
                inner_tol,
                self.rel_tol,
                self.max_segments,
            )
            .value
        };
        let pts = sorted_points(t_lo, t_hi, &[0.0, r_lo, -r_lo, r_hi, -r_hi, rho, -rho]);
        let res = quad::adaptive(inner, &pts, abs_tol, self.rel_tol, self.max_segments);
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok((res.value, res.error + inner_tol * (t_hi - t_lo)))
    }

    /// `G(f ⊗ f′) = lim ∫∫ f(p) G_ε(p, q) f′(q)`.
    pub fn pair(&self, f: &Gaussian, f2: &Gaussian, eps_schedule: &[f64], tol: Option<f64>) -> Result<PairingValue, HadamardError> {
        let h = f.cross_correlation(f2);
        evaluate_distribution(|e| self.at_eps(&h, e), eps_schedule, tol)
    }

    /// `G^(−)(f ⊗ f′) = ½ (G(f ⊗ f′) − G(f′ ⊗ f))`.
    pub fn antisymmetric(&self, f: &Gaussian, f2: &Gaussian, eps_schedule: &[f64], tol: Option<f64>) -> Result<PairingValue, HadamardError> {
        let a = self.pair(f, f2, eps_schedule, tol)?;
        let b = self.pair(f2, f, eps_schedule, tol)?;
        Ok(PairingValue::combine(&a, &b, 0.5, -0.5))
    }
}

/// Both sides of `G^(1)(−) = i R(2)` on a Gaussian pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub g1_minus: PairingValue,
    pub r2: RieszValue,
    /// `|G^(1)(−) − i R(2)|`.
    pub residual: f64,
    /// Largest magnitude among `G^(1)(f⊗f′)`, `G^(1)(f′⊗f)`, `R(2)`.
    pub scale: f64,
}

impl CommutatorReport {
    pub fn relative(&self) -> f64 {
        self.residual / self.scale
    }
}

/// Antisymmetric part of the `G^(1)` pairing against `i` times the `R(2)`
/// part of the local parametrix, flat configurations only.
pub fn commutator_identity_check(
    geom: &SpacetimeModel,
    spec: &SeriesSpec,
    coeffs: &dyn CoefficientEvaluator,
    f: &Gaussian,
    f2: &Gaussian,
) -> Result<CommutatorReport, HadamardError> {
    spec.validate()?;
    if !geom.is_flat_minkowski() || geom.time_axis() != 0 {
        return Err(HadamardError::InvalidInput("the commutator identity is evaluated in flat Minkowski charts with time axis 0".into()));
    }
    if spec.t_func != TimeFunction::default() {
        return Err(HadamardError::InvalidInput("flat pairings use the time coordinate".into()));
    }
    let engine = FlatPairing::new(FlatKernel::g1_from_series(spec, coeffs)?);
    let a = engine.pair(f, f2, &spec.eps_schedule, None)?;
    let b = engine.pair(f2, f, &spec.eps_schedule, None)?;
    let g1_minus = PairingValue::combine(&a, &b, 0.5, -0.5);
    let (r2, _) = parametrix_terms(geom, coeffs, spec, f, f2)?;
    let residual = (g1_minus.value - C64::new(0.0, r2.value)).norm();
    let scale = a.value.norm().max(b.value.norm()).max(r2.value.abs());
    Ok(CommutatorReport { g1_minus, r2, residual, scale })
}

/// Quadrature resolution of [`time_function_pairing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePairingOptions {
    pub hermite_nodes: usize,
    pub min_angle_nodes: usize,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for TimePairingOptions {
    fn default() -> Self {
        Self { hermite_nodes: 12, min_angle_nodes: 16, rel_tol: 1e-8, max_segments: 400 }
    }
}

/// Pairing `lim ∫∫ f(p) K_ε(p, q) f′(q)` in flat three-dimensional
/// Minkowski space with the regulator built from a general time function
/// `t = x₀ + A tanh(x₁)`.
///
/// `p₀` and `p₂` are integrated in closed form; `p₁` by Gauss-Hermite, the
/// relative position `z = q − p` in polar coordinates `(z₀, r, φ)`.
pub fn time_function_pairing(
    kernel: &FlatKernel,
    f: &Gaussian,
    f2: &Gaussian,
    t_func: &TimeFunction,
    eps_schedule: &[f64],
    opts: &TimePairingOptions,
) -> Result<PairingValue, HadamardError> {
    if kernel.m != 3 || f.dim() != 3 || f2.dim() != 3 {
        return Err(HadamardError::InvalidInput("the time-function pairing is implemented for m = 3".into()));
    }
    let amp = match *t_func {
        TimeFunction::Coordinate { axis: 0 } => 0.0,
        TimeFunction::TanhPerturbed { axis: 0, amplitude, along: 1 } => amplitude,
        _ => return Err(HadamardError::InvalidInput("time function must be x₀ or x₀ + A tanh(x₁)".into())),
    };
    let h = f.cross_correlation(f2);
    let (sx, sx2) = (f.sigma_x, f2.sigma_x);
    let big_s2 = sx * sx + sx2 * sx2;
    let w = (sx * sx * sx2 * sx2 / big_s2).sqrt();
    // h's amplitude contains the p₁ integral √(2π) w for A = 0
    let pref = h.coef[0][0] / ((2.0 * PI).sqrt() * w);
    let (gx, gw) = quad::gauss_hermite(opts.hermite_nodes);
    let (a1, b1) = (f.center[1], f2.center[1]);
    let c = h.center.clone();
    let (t_lo, t_hi) = h.time_window();
    let (r_lo, r_hi) = h.radial_window();
    let rho = (c[1] * c[1] + c[2] * c[2]).sqrt();
    let abs_tol = 1e-11 * h.l1_bound() * kernel.magnitude();
    let inner_tol = abs_tol / (t_hi - t_lo);

    let at_eps = |eps: f64| -> Result<(C64, f64), HadamardError> {
        let failure = Mutex::new(None);
        let angular = |z0: f64, r: f64| -> C64 {
            let s = r * r - z0 * z0;
            let kappa = r * rho / big_s2;
            let n_phi = opts.min_angle_nodes + (10.0 * kappa.sqrt()).ceil() as usize;
            let time_gauss = (-(z0 - c[0]).powi(2) / (2.0 * h.sigma_t.powi(2))).exp();
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                let (z1, z2) = (r * phi.cos(), r * phi.sin());
                let space = (-((z1 - c[1]).powi(2) + (z2 - c[2]).powi(2)) / (2.0 * big_s2)).exp();
                if space < 1e-300 {
                    continue;
                }
                let mu = (a1 * sx2 * sx2 + (b1 - z1) * sx * sx) / big_s2;
                let mut along = C64::new(0.0, 0.0);
                for (x, wt) in gx.iter().zip(&gw) {
                    let p1 = mu + std::f64::consts::SQRT_2 * w * x;
                    let dt = -z0 + amp * (p1.tanh() - (p1 + z1).tanh());
                    match kernel.eval(s, dt, eps) {
                        Ok(k) => along += k * *wt,
                        Err(e) => {
                            failure.lock().expect("poisoned").get_or_insert(e);
                        }
                    }
                }
                acc += along * (space * std::f64::consts::SQRT_2 * w);
            }
            acc * (time_gauss * 2.0 * PI / n_phi as f64)
        };
        let inner = |z0: f64| -> C64 {
            let pts = sorted_points(r_lo, r_hi, &[z0.abs(), rho]);
            quad::adaptive(|r| angular(z0, r) * r, &pts, inner_tol, opts.rel_tol, opts.max_segments).value
        };
        let pts = sorted_points(t_lo, t_hi, &[0.0, r_lo, -r_lo, r_hi, -r_hi, rho, -rho]);
        let res = quad::adaptive(inner, &pts, abs_tol, opts.rel_tol, opts.max_segments);
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok((res.value * pref, (res.error + inner_tol * (t_hi - t_lo)) * pref.abs()))
    };
    evaluate_distribution(at_eps, eps_schedule, None)
}
