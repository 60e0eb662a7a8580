//! Flat-space Riesz distributions
//! `R̃(α)[φ] = −β(α, m) ∫ sign(x₀) θ(η) η^{(α−m)/2} φ`, continued to all α
//! by `R̃(α)[φ] = R̃(α+2)[□φ]`, and the local parametrix built from them.

use super::pairing::Gaussian;
use super::{pochhammer_even, riesz_beta, CoefficientEvaluator, HadamardError, HadamardSeries, SeriesSpec};
use crate::geometry::SpacetimeModel;
use crate::numerics::quad;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// `φ(z) = P(a, b) exp(−a/(2σ_t²) − b/(2σ_x²))` with `a = (z₀ − c₀)²`,
/// `b = |z⃗ − c⃗|²` and `P(a, b) = Σ coef[i][j] a^i b^j`. Axis 0 is time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGaussPoly {
    pub m: usize,
    pub center: Vec<f64>,
    pub sigma_t: f64,
    pub sigma_x: f64,
    pub coef: Vec<Vec<f64>>,
}

/// Area of the unit sphere `S^k ⊂ ℝ^{k+1}`.
pub(crate) fn sphere_area(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn gl48() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| quad::gauss_legendre(48))
}

fn double_factorial_odd(i: usize) -> f64 {
    // (2i − 1)!!
    (1..=i).map(|k| (2 * k - 1) as f64).product()
}

type Poly = Vec<Vec<f64>>;

fn poly_get(p: &Poly, i: usize, j: usize) -> f64 {
    p.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0)
}

fn poly_dims(p: &Poly) -> (usize, usize) {
    (p.len(), p.iter().map(Vec::len).max().unwrap_or(0))
}

fn poly_new(ni: usize, nj: usize) -> Poly {
    vec![vec![0.0; nj]; ni]
}

/// `d/da [P e^{−a/(2s²)}] = Q e^{…}`, returns `Q = P_a − P/(2s²)`; the
/// `a` variable is the first index when `first` is true.
fn exp_poly_derivative(p: &Poly, s2: f64, first: bool) -> Poly {
    let (ni, nj) = poly_dims(p);
    let mut q = poly_new(ni, nj);
    for i in 0..ni {
        for j in 0..nj {
            let c = poly_get(p, i, j);
            if c == 0.0 {
                continue;
            }
            q[i][j] -= c / (2.0 * s2);
            if first && i > 0 {
                q[i - 1][j] += i as f64 * c;
            }
            if !first && j > 0 {
                q[i][j - 1] += j as f64 * c;
            }
        }
    }
    q
}

/// `2 d·Q + 4v (Q_v − Q/(2s²))` for the radial Laplacian in `d` dimensions of
/// a function of `v = |y|²` (with `Q` the first derivative polynomial).
fn radial_laplacian(p: &Poly, s2: f64, dim: f64, first: bool) -> Poly {
    let q = exp_poly_derivative(p, s2, first);
    let qq = exp_poly_derivative(&q, s2, first);
    let (ni, nj) = poly_dims(&qq);
    let mut out = poly_new(ni + 1, nj + 1);
    for i in 0..ni {
        for j in 0..nj {
            let c = poly_get(&q, i, j);
            out[i][j] += 2.0 * dim * c;
            let d = poly_get(&qq, i, j);
            if first {
                out[i + 1][j] += 4.0 * d;
            } else {
                out[i][j + 1] += 4.0 * d;
            }
        }
    }
    out
}

impl RadialGaussPoly {
    pub fn gaussian(m: usize, center: &[f64], sigma_t: f64, sigma_x: f64, amplitude: f64) -> Self {
        Self { m, center: center.to_vec(), sigma_t, sigma_x, coef: vec![vec![amplitude]] }
    }

    fn spatial_dim(&self) -> usize {
        self.m - 1
    }

    fn rho(&self) -> f64 {
        self.center[1..].iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn poly_at(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        let mut ai = 1.0;
        for row in &self.coef {
            let mut bj = 1.0;
            for c in row {
                acc += c * ai * bj;
                bj *= b;
            }
            ai *= a;
        }
        acc
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let a = (z[0] - self.center[0]).powi(2);
        let b: f64 = z[1..].iter().zip(&self.center[1..]).map(|(x, c)| (x - c) * (x - c)).sum();
        self.poly_at(a, b) * (-a / (2.0 * self.sigma_t.powi(2)) - b / (2.0 * self.sigma_x.powi(2))).exp()
    }

    /// `□φ = ∂₀²φ − Δφ`.
    pub fn box_op(&self) -> Self {
        let t = radial_laplacian(&self.coef, self.sigma_t.powi(2), 1.0, true);
        let x = radial_laplacian(&self.coef, self.sigma_x.powi(2), self.spatial_dim() as f64, false);
        let (ti, tj) = poly_dims(&t);
        let (xi, xj) = poly_dims(&x);
        let mut out = poly_new(ti.max(xi), tj.max(xj));
        for (i, row) in out.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = poly_get(&t, i, j) - poly_get(&x, i, j);
            }
        }
        Self { coef: out, ..self.clone() }
    }

    /// `z ↦ φ(z/λ)`.
    pub fn dilate(&self, lambda: f64) -> Self {
        let coef = self
            .coef
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, c)| c / lambda.powi(2 * (i + j) as i32)).collect())
            .collect();
        Self {
            m: self.m,
            center: self.center.iter().map(|c| c * lambda).collect(),
            sigma_t: self.sigma_t * lambda,
            sigma_x: self.sigma_x * lambda,
            coef,
        }
    }

    /// `z ↦ φ(−z₀, z⃗)`.
    pub fn time_reflected(&self) -> Self {
        let mut c = self.center.clone();
        c[0] = -c[0];
        Self { center: c, ..self.clone() }
    }

    /// `∫ |φ|` bound from the Gaussian moments of `|P|`.
    pub fn l1_bound(&self) -> f64 {
        let n = self.spatial_dim() as f64;
        let st2 = self.sigma_t.powi(2);
        let sx2 = self.sigma_x.powi(2);
        let mut acc = 0.0;
        for (i, row) in self.coef.iter().enumerate() {
            let ea = st2.powi(i as i32) * double_factorial_odd(i);
            for (j, c) in row.iter().enumerate() {
                let eb = (2.0 * sx2).powi(j as i32) * gamma(n / 2.0 + j as f64) / gamma(n / 2.0);
                acc += c.abs() * ea * eb;
            }
        }
        acc * (2.0 * PI).powf(self.m as f64 / 2.0) * self.sigma_t * self.sigma_x.powf(n)
    }

    /// `∫ φ` over `ℝ^m`.
    pub fn integral(&self) -> f64 {
        let n = self.spatial_dim() as f64;
        let st2 = self.sigma_t.powi(2);
        let sx2 = self.sigma_x.powi(2);
        let mut acc = 0.0;
        for (i, row) in self.coef.iter().enumerate() {
            let ea = st2.powi(i as i32) * double_factorial_odd(i);
            for (j, c) in row.iter().enumerate() {
                acc += c * ea * (2.0 * sx2).powi(j as i32) * gamma(n / 2.0 + j as f64) / gamma(n / 2.0);
            }
        }
        acc * (2.0 * PI).powf(self.m as f64 / 2.0) * self.sigma_t * self.sigma_x.powf(n)
    }

    /// `M_j(r) = ∫_{S^{n−1}} b^j e^{−b/(2σ_x²)} dω` at spatial radius `r`.
    pub fn spatial_moments(&self, r: f64) -> Vec<f64> {
        let nj = poly_dims(&self.coef).1.max(1);
        let n = self.spatial_dim();
        let rho = self.rho();
        let sx2 = self.sigma_x.powi(2);
        if rho == 0.0 || r == 0.0 {
            let b = r * r + rho * rho;
            let base = sphere_area(n - 1) * (-b / (2.0 * sx2)).exp();
            return (0..nj).map(|j| base * b.powi(j as i32)).collect();
        }
        let kappa = r * rho / sx2;
        let theta_c = if kappa < 16.0 { PI } else { (12.0 / kappa.sqrt()).min(PI) };
        let d = (r - rho).powi(2);
        let pref = (-d / (2.0 * sx2)).exp() * sphere_area(n - 2) * 0.5 * theta_c;
        let (x, w) = gl48();
        let mut out = vec![0.0; nj];
        for (xi, wi) in x.iter().zip(w) {
            let th = 0.5 * theta_c * (xi + 1.0);
            let one_minus_cos = 2.0 * (0.5 * th).sin().powi(2);
            let b = d + 2.0 * r * rho * one_minus_cos;
            let weight = wi * (-kappa * one_minus_cos).exp() * th.sin().powi(n as i32 - 2);
            let mut bj = 1.0;
            for o in out.iter_mut() {
                *o += weight * bj;
                bj *= b;
            }
        }
        out.iter().map(|v| v * pref).collect()
    }

    /// `Φ(z₀, r) = ∫_{S^{n−1}} φ(z₀, rω) dω`.
    pub fn angular(&self, z0: f64, r: f64) -> f64 {
        let a = (z0 - self.center[0]).powi(2);
        let mom = self.spatial_moments(r);
        let mut acc = 0.0;
        let mut ai = 1.0;
        for row in &self.coef {
            for (j, c) in row.iter().enumerate() {
                acc += c * ai * mom[j];
            }
            ai *= a;
        }
        acc * (-a / (2.0 * self.sigma_t.powi(2))).exp()
    }

    /// Extent of the time support used by quadratures.
    pub(crate) fn time_window(&self) -> (f64, f64) {
        (self.center[0] - 12.0 * self.sigma_t, self.center[0] + 12.0 * self.sigma_t)
    }

    /// Radial window `[r_lo, r_hi]` of the spatial support.
    pub(crate) fn radial_window(&self) -> (f64, f64) {
        let rho = self.rho();
        ((rho - 12.0 * self.sigma_x).max(0.0), rho + 12.0 * self.sigma_x)
    }
}

/// Sampled function on a regular grid (row-major, axis 0 = time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn sample<F: Fn(&[f64]) -> f64>(origin: &[f64], spacing: &[f64], shape: &[usize], f: F) -> Self {
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        for idx in 0..total {
            values.push(f(&Self::point_of(origin, spacing, shape, idx)));
        }
        Self { origin: origin.to_vec(), spacing: spacing.to_vec(), shape: shape.to_vec(), values }
    }

    fn point_of(origin: &[f64], spacing: &[f64], shape: &[usize], mut idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; shape.len()];
        for ax in (0..shape.len()).rev() {
            p[ax] = origin[ax] + spacing[ax] * (idx % shape[ax]) as f64;
            idx /= shape[ax];
        }
        p
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        Self::point_of(&self.origin, &self.spacing, &self.shape, idx)
    }
}

/// Test function handed to [`riesz`].
#[derive(Debug, Clone, PartialEq)]
pub enum RieszInput {
    /// Closed form with exact `□`.
    Analytic(RadialGaussPoly),
    /// Samples only; no derivatives available.
    Grid(GridFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszValue {
    pub value: f64,
    pub error: f64,
}

/// Number of `□` applications bringing α into the directly integrable range.
fn descent_steps(alpha: f64, m: usize) -> usize {
    let mf = m as f64;
    if alpha > mf {
        0
    } else {
        ((mf - alpha) / 2.0).floor() as usize + 1
    }
}

/// `R̃(α)[φ]` in flat `m`-dimensional Minkowski space.
pub fn riesz(alpha: f64, m: usize, phi: &RieszInput) -> Result<RieszValue, HadamardError> {
    let steps = descent_steps(alpha, m);
    match phi {
        RieszInput::Grid(g) => {
            if steps > 0 {
                return Err(HadamardError::NeedsDerivatives { alpha });
            }
            Ok(riesz_grid(alpha, m, g))
        }
        RieszInput::Analytic(p) => {
            if p.m != m {
                return Err(HadamardError::InvalidInput("dimension mismatch".into()));
            }
            let mut q = p.clone();
            for _ in 0..steps {
                q = q.box_op();
            }
            Ok(riesz_direct(alpha + 2.0 * steps as f64, &q))
        }
    }
}

/// `R̃(α)[s^k φ]` with `s = −η`, via `η R̃(α) = α(α−m+2) R̃(α+2)`.
pub fn riesz_times_s_power(alpha: f64, k: usize, phi: &RadialGaussPoly) -> Result<RieszValue, HadamardError> {
    let m = phi.m as f64;
    let c: f64 = (0..k).map(|j| (alpha + 2.0 * j as f64) * (alpha + 2.0 * j as f64 - m + 2.0)).product();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    if c == 0.0 {
        return Ok(RieszValue { value: 0.0, error: 0.0 });
    }
    let v = riesz(alpha + 2.0 * k as f64, phi.m, &RieszInput::Analytic(phi.clone()))?;
    Ok(RieszValue { value: sign * c * v.value, error: c.abs() * v.error })
}

fn riesz_grid(alpha: f64, m: usize, g: &GridFunction) -> RieszValue {
    let vol: f64 = g.spacing.iter().product();
    let p = (alpha - m as f64) / 2.0;
    let mut acc = 0.0;
    for (idx, v) in g.values.iter().enumerate() {
        let z = g.point(idx);
        let eta = z[0] * z[0] - z[1..].iter().map(|x| x * x).sum::<f64>();
        if eta > 0.0 && z[0] != 0.0 {
            acc += z[0].signum() * eta.powf(p) * v;
        }
    }
    RieszValue { value: -riesz_beta(alpha, m) * acc * vol, error: f64::NAN }
}

/// Direct quadrature, `α > m − 1`, in the cone variables `r = |z₀| sin ψ`.
fn riesz_direct(alpha: f64, phi: &RadialGaussPoly) -> RieszValue {
    let m = phi.m;
    let (t_lo, t_hi) = phi.time_window();
    let (r_lo, r_hi) = phi.radial_window();
    let rho = phi.rho();
    let scale = phi.l1_bound() * t_lo.abs().max(t_hi.abs()).max(1.0).powf(alpha - 1.0);
    let abs_tol = 1e-13 * scale;
    let inner = |z0: f64| -> f64 {
        let az = z0.abs();
        if az <= r_lo {
            return 0.0;
        }
        let mut pts = vec![0.0];
        for r in [r_lo, rho - 6.0 * phi.sigma_x, rho, rho + 6.0 * phi.sigma_x, r_hi] {
            if r > 0.0 && r < az {
                pts.push((r / az).asin());
            }
        }
        pts.push(0.5 * PI);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let (v, _) = quad::adaptive_real(
            |psi| {
                let (s, c) = psi.sin_cos();
                s.powi(m as i32 - 2) * c.powf(alpha - m as f64 + 1.0) * phi.angular(z0, az * s)
            },
            &pts,
            abs_tol * 1e-2 / az.powf(alpha - 1.0).max(1e-300),
            1e-12,
            400,
        );
        z0.signum() * az.powf(alpha - 1.0) * v
    };
    let mut pts = vec![t_lo, t_hi];
    for p in [0.0, r_lo, -r_lo, r_hi, -r_hi] {
        if p > t_lo && p < t_hi {
            pts.push(p);
        }
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let (v, e) = quad::adaptive_real(inner, &pts, abs_tol, 1e-11, 400);
    let b = riesz_beta(alpha, m);
    RieszValue { value: -b * v, error: b.abs() * e }
}

/// Local parametrix `(f, E f′)` from the truncated Riesz series, for flat
/// Minkowski space and scalar coefficients (constant along the chart).
pub fn local_parametrix(
    geom: &SpacetimeModel,
    coeffs: &dyn CoefficientEvaluator,
    spec: &SeriesSpec,
    f: &Gaussian,
    f2: &Gaussian,
) -> Result<RieszValue, HadamardError> {
    let (a, b) = parametrix_terms(geom, coeffs, spec, f, f2)?;
    Ok(RieszValue { value: a.value + b.value, error: a.error + b.error })
}

/// The `R(2)`-terms and (even m) the `R(m)`-terms of [`local_parametrix`].
pub(crate) fn parametrix_terms(
    geom: &SpacetimeModel,
    coeffs: &dyn CoefficientEvaluator,
    spec: &SeriesSpec,
    f: &Gaussian,
    f2: &Gaussian,
) -> Result<(RieszValue, RieszValue), HadamardError> {
    if !geom.is_flat_minkowski() || geom.time_axis() != 0 {
        return Err(HadamardError::InvalidInput("the Riesz series is evaluated in flat Minkowski charts with time axis 0".into()));
    }
    if coeffs.rank() != 1 {
        return Err(HadamardError::InvalidInput("scalar coefficients expected".into()));
    }
    let m = spec.m;
    let series = HadamardSeries::new(m, spec.n);
    let origin = vec![0.0; m];
    let u: Vec<f64> = coeffs.coefficients(&origin, &origin, series.required_order())?.iter().map(|c| c[(0, 0)].re).collect();
    let h = f.cross_correlation(f2);
    let add = |acc: &mut RieszValue, alpha: f64, k: usize, c: f64| -> Result<(), HadamardError> {
        if c == 0.0 {
            return Ok(());
        }
        let v = riesz_times_s_power(alpha, k, &h)?;
        acc.value += c * v.value;
        acc.error += c.abs() * v.error;
        Ok(())
    };
    let mut r2 = RieszValue { value: 0.0, error: 0.0 };
    let mut rm = RieszValue { value: 0.0, error: 0.0 };
    let top = if series.is_even() { (m - 4) / 2 } else { series.required_order() };
    for (k, uk) in u.iter().enumerate().take(top + 1) {
        add(&mut r2, 2.0, k, uk / pochhammer_even(4.0 - m as f64, k))?;
    }
    if series.is_even() {
        let pre = pochhammer_even(2.0, m / 2 - 1);
        let mut fact = 1.0;
        for k in 0..=spec.n {
            if k > 0 {
                fact *= 2.0 * k as f64;
            }
            add(&mut rm, m as f64, k, pre * u[(m - 2) / 2 + k] / fact)?;
        }
    }
    Ok((r2, rm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::FlatKleinGordon;

    fn gp(m: usize) -> RadialGaussPoly {
        let mut c = vec![0.0; m];
        c[0] = 0.9;
        c[1] = 0.3;
        RadialGaussPoly::gaussian(m, &c, 0.35, 0.3, 1.0)
    }

    #[test]
    fn box_matches_finite_differences() {
        let p = gp(4);
        let q = p.box_op();
        let z = [0.7, 0.2, -0.1, 0.15];
        let h = 1e-3;
        let mut lap = 0.0;
        for ax in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[ax] += h;
            zm[ax] -= h;
            let d2 = (p.eval(&zp) - 2.0 * p.eval(&z) + p.eval(&zm)) / (h * h);
            lap += if ax == 0 { d2 } else { -d2 };
        }
        assert!((q.eval(&z) - lap).abs() < 1e-5 * q.eval(&z).abs().max(1.0));
    }

    #[test]
    fn angular_average_of_gaussian_closed_form_in_four_dimensions() {
        // ∫_{S²} e^{−|rω−c|²/2s²} dω = 2π e^{−(r−ρ)²/2s²} (1 − e^{−2κ})/κ
        let p = gp(4);
        let (r, rho, s2): (f64, f64, f64) = (0.45, 0.3, 0.09);
        let kappa = r * rho / s2;
        let expect = 2.0 * PI * (-(r - rho) * (r - rho) / (2.0 * s2)).exp() * (1.0 - (-2.0 * kappa).exp()) / kappa;
        let got = p.angular(0.9, r);
        assert!((got - expect).abs() < 1e-13 * expect);
    }

    #[test]
    fn integral_matches_closed_form() {
        let p = gp(3).box_op();
        // ∫□φ = 0
        assert!(p.integral().abs() < 1e-12);
        let g = gp(3);
        let expect = (2.0 * PI).powf(1.5) * 0.35 * 0.09;
        assert!((g.integral() - expect).abs() < 1e-14);
    }

    #[test]
    fn descent_identity_three_dimensions() {
        let phi = RieszInput::Analytic(gp(3));
        let direct = riesz(5.0, 3, &phi).unwrap();
        let boxed = RieszInput::Analytic(gp(3).box_op());
        let descended = riesz(7.0, 3, &boxed).unwrap();
        assert!((direct.value - descended.value).abs() <= 1e-7 * direct.value.abs(), "{direct:?} {descended:?}");
    }

    #[test]
    fn time_reflection_even_function_vanishes() {
        let mut c = gp(3);
        c.center[0] = 0.0;
        let v = riesz(5.0, 3, &RieszInput::Analytic(c.clone())).unwrap();
        assert!(v.value.abs() <= 1e-10 * c.l1_bound());
    }

    #[test]
    fn homogeneity_under_dilation() {
        let p = gp(3);
        let lambda = 0.5;
        let a = riesz(5.0, 3, &RieszInput::Analytic(p.dilate(lambda))).unwrap();
        let b = riesz(5.0, 3, &RieszInput::Analytic(p)).unwrap();
        assert!((a.value - lambda.powi(5) * b.value).abs() <= 1e-8 * a.value.abs());
    }

    #[test]
    fn grid_input_needs_derivatives_below_dimension() {
        let g = GridFunction::sample(&[-1.0; 3], &[0.1; 3], &[21, 21, 21], |z| (-z.iter().map(|v| v * v).sum::<f64>()).exp());
        assert!(matches!(riesz(2.0, 3, &RieszInput::Grid(g.clone())), Err(HadamardError::NeedsDerivatives { .. })));
        assert!(riesz(5.0, 3, &RieszInput::Grid(g)).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn grid_quadrature_agrees_with_analytic() {
        let p = gp(3);
        let g = GridFunction::sample(&[-1.5, -2.0, -2.0], &[0.025; 3], &[161, 161, 161], |z| p.eval(z));
        let a = riesz(5.0, 3, &RieszInput::Grid(g)).unwrap().value;
        let b = riesz(5.0, 3, &RieszInput::Analytic(p)).unwrap().value;
        assert!((a - b).abs() < 1e-3 * b.abs(), "{a} {b}");
    }

    /// `(f, E f′)` with `E` retarded minus advanced of `□` in four dimensions:
    /// `(1/4π) ∫_0^∞ r [H(−r, r) − H(r, r)] dr`, `H` the spherical integral of
    /// the cross-correlation; evaluated from the closed-form sphere average.
    fn flat_commutator_oracle(f: &Gaussian, f2: &Gaussian) -> f64 {
        let h = f.cross_correlation(f2);
        let c = &h.center;
        let rho = (c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
        let s2 = h.sigma_x * h.sigma_x;
        let st2 = h.sigma_t * h.sigma_t;
        let amp = h.coef[0][0];
        let sphere = |r: f64| {
            let kappa = r * rho / s2;
            let ang = if kappa < 1e-12 { 4.0 * PI } else { 2.0 * PI * (1.0 - (-2.0 * kappa).exp()) / kappa };
            ang * (-(r - rho) * (r - rho) / (2.0 * s2)).exp()
        };
        let integrand = |r: f64| {
            let past = (-(-r - c[0]).powi(2) / (2.0 * st2)).exp();
            let fut = (-(r - c[0]).powi(2) / (2.0 * st2)).exp();
            amp * r * sphere(r) * (past - fut) / (4.0 * PI)
        };
        quad::adaptive_real(integrand, &[0.0, rho, 20.0], 1e-15, 1e-13, 2000).0
    }

    #[test]
    fn parametrix_matches_flat_commutator_function() {
        let geom = SpacetimeModel::minkowski(4, 3.0);
        let spec = SeriesSpec::new(4, 0, 1.0);
        let f = Gaussian::isotropic(&[0.0, 0.1, 0.0, -0.1], 0.25, 1.0);
        let f2 = Gaussian::isotropic(&[0.8, 0.4, 0.2, 0.0], 0.2, 1.0);
        let e = local_parametrix(&geom, &FlatKleinGordon { mass: 0.0 }, &spec, &f, &f2).unwrap();
        let oracle = flat_commutator_oracle(&f, &f2);
        assert!((e.value - oracle).abs() <= 1e-6 * oracle.abs(), "{} {}", e.value, oracle);
    }

    #[test]
    fn parametrix_vanishes_for_spacelike_bumps() {
        let geom = SpacetimeModel::minkowski(3, 3.0);
        let spec = SeriesSpec::new(3, 0, 1.0);
        let f = Gaussian::isotropic(&[0.0, -0.8, 0.0], 0.05, 1.0);
        let f2 = Gaussian::isotropic(&[0.0, 0.8, 0.0], 0.05, 1.0);
        let scale = f.l1() * f2.l1();
        let e = local_parametrix(&geom, &FlatKleinGordon { mass: 0.0 }, &spec, &f, &f2).unwrap();
        assert!(e.value.abs() <= 1e-6 * scale);
    }
}
