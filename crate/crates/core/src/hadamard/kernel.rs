//! Pointwise regularized kernels `χ G^(1)_ε` and `χ G^(2)_ε`.

use super::transport::{transport_coefficients, TransportOptions};
use super::{kernel_constants, HadamardError, HadamardSeries, SeriesSpec};
use crate::bundle::{FibreMatrix, WaveOperator};
use crate::geometry::{shoot, world_function, ShootingOptions, SpacetimeModel};
use crate::numerics::richardson;
use crate::numerics::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Principal branch of `z^{1−m/2}`, cut along the negative real axis.
pub fn regularized_power(m: usize, z: C64) -> Result<C64, HadamardError> {
    check_cut(z)?;
    let p = 1.0 - m as f64 / 2.0;
    if m % 2 == 0 {
        Ok(z.powi(p as i32))
    } else {
        Ok(z.powf(p))
    }
}

/// Principal logarithm, cut along the negative real axis.
pub fn regularized_log(z: C64) -> Result<C64, HadamardError> {
    check_cut(z)?;
    Ok(z.ln())
}

fn check_cut(z: C64) -> Result<(), HadamardError> {
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(HadamardError::BranchCutHit { re: z.re, im: z.im });
    }
    Ok(())
}

/// `s − i2ε(t(x) − t(y)) + ε²`.
pub fn regularized_argument(s: f64, dt: f64, eps: f64) -> C64 {
    C64::new(s + eps * eps, -2.0 * eps * dt)
}

/// Source of the Hadamard coefficients `U_0..U_K` at a pair `(x, y)`.
pub trait CoefficientEvaluator: Send + Sync {
    fn rank(&self) -> usize;
    fn coefficients(&self, x: &[f64], y: &[f64], order: usize) -> Result<Vec<FibreMatrix>, HadamardError>;
}

/// Flat-space Klein–Gordon coefficients `U_k = (−mass²/2)^k / k!`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatKleinGordon {
    pub mass: f64,
}

impl CoefficientEvaluator for FlatKleinGordon {
    fn rank(&self) -> usize {
        1
    }

    fn coefficients(&self, _x: &[f64], _y: &[f64], order: usize) -> Result<Vec<FibreMatrix>, HadamardError> {
        let a = -self.mass * self.mass / 2.0;
        let mut c = 1.0;
        Ok((0..=order)
            .map(|k| {
                if k > 0 {
                    c *= a / k as f64;
                }
                FibreMatrix::from_element(1, 1, C64::new(c, 0.0))
            })
            .collect())
    }
}

/// Coefficients from the transport solver, one ray per pair.
#[derive(Debug, Clone)]
pub struct TransportEvaluator {
    pub op: Arc<WaveOperator>,
    pub opts: TransportOptions,
    /// Parameter used to approach the diagonal when `x = y`.
    pub coincidence_step: f64,
}

impl TransportEvaluator {
    pub fn new(op: Arc<WaveOperator>) -> Self {
        let step = 0.02 * op.base.chart().scale();
        Self { op, opts: TransportOptions::default(), coincidence_step: step }
    }

    /// `U_k(y, y)`, extrapolated along a timelike ray.
    pub fn coincidence(&self, y: &[f64], order: usize) -> Result<Vec<FibreMatrix>, HadamardError> {
        let m = self.op.base.dim();
        let mut w = vec![0.0; m];
        w[self.op.base.time_axis()] = 1.0;
        let h = self.coincidence_step;
        let ts = [0.25 * h, 0.5 * h, h];
        let table = transport_coefficients(&self.op, y, &[w], &ts, order, &self.opts)?;
        let r = self.op.bundle.r;
        let ray = &table.rays[0];
        let hs = [h, 0.5 * h, 0.25 * h];
        Ok((0..=order)
            .map(|k| {
                if k == 0 {
                    return FibreMatrix::identity(r, r);
                }
                FibreMatrix::from_fn(r, r, |i, j| {
                    let vals = [ray.u[k][2][(i, j)], ray.u[k][1][(i, j)], ray.u[k][0][(i, j)]];
                    richardson::extrapolate(&hs, &vals, 1, 0.0).value
                })
            })
            .collect())
    }
}

impl CoefficientEvaluator for TransportEvaluator {
    fn rank(&self) -> usize {
        self.op.bundle.r
    }

    fn coefficients(&self, x: &[f64], y: &[f64], order: usize) -> Result<Vec<FibreMatrix>, HadamardError> {
        if x == y {
            return self.coincidence(y, order);
        }
        let (w, _, _) = shoot(&self.op.base, y, x, &ShootingOptions::default())?;
        let table = transport_coefficients(&self.op, y, &[w], &[1.0], order, &self.opts)?;
        Ok(table.rays[0].u.iter().map(|uk| uk[0].clone()).collect())
    }
}

/// `s(x, y)`: closed form in Minkowski space, shooting otherwise.
pub fn world_function_value(geom: &SpacetimeModel, x: &[f64], y: &[f64]) -> Result<f64, HadamardError> {
    if geom.is_flat_minkowski() {
        let t = geom.time_axis();
        return Ok(x.iter().zip(y).enumerate().map(|(i, (a, b))| if i == t { -(a - b) * (a - b) } else { (a - b) * (a - b) }).sum());
    }
    Ok(world_function(geom, y, x)?.s)
}

/// `χ G^(1)_ε(x, y)` (odd m) or `χ G^(1)_ε + χ G^(2)_ε` (even m), with the
/// coefficient sections `T^(n)`, resp. `U` and `V^(n)`, multiplied in.
pub fn kernel_eps(
    geom: &SpacetimeModel,
    spec: &SeriesSpec,
    coeffs: &dyn CoefficientEvaluator,
    x: &[f64],
    y: &[f64],
    eps: f64,
) -> Result<FibreMatrix, HadamardError> {
    let r = coeffs.rank();
    let chi = spec.chi_value(x, y);
    if chi == 0.0 {
        return Ok(FibreMatrix::zeros(r, r));
    }
    let s = world_function_value(geom, x, y)?;
    let z = regularized_argument(s, spec.t_func.eval(x) - spec.t_func.eval(y), eps);
    let series = HadamardSeries::new(spec.m, spec.n);
    let cs = coeffs.coefficients(x, y, series.required_order())?;
    let b = kernel_constants(spec.m);
    let p = regularized_power(spec.m, z)? * b.beta1 * chi;
    if series.is_even() {
        let l = regularized_log(z)? * b.beta2.unwrap_or(0.0) * chi;
        Ok(series.u(&cs, s)? * p + series.v(&cs, s)? * l)
    } else {
        Ok(series.t(&cs, s)? * p)
    }
}

/// Kernel values on a list of pairs for each ε of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedKernel {
    pub m: usize,
    pub rank: usize,
    pub beta1: f64,
    pub beta2: Option<f64>,
    pub eps: Vec<f64>,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// `values[pair][eps]`, row-major `[re, im]` entries.
    pub values: Vec<Vec<Vec<[f64; 2]>>>,
}

impl RegularizedKernel {
    pub fn sample(
        geom: &SpacetimeModel,
        spec: &SeriesSpec,
        coeffs: &dyn CoefficientEvaluator,
        pairs: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self, HadamardError> {
        spec.validate()?;
        let values = pairs
            .par_iter()
            .map(|(x, y)| {
                spec.eps_schedule
                    .iter()
                    .map(|&e| {
                        let k = kernel_eps(geom, spec, coeffs, x, y, e)?;
                        Ok(k.transpose().iter().map(|z| [z.re, z.im]).collect())
                    })
                    .collect::<Result<Vec<_>, HadamardError>>()
            })
            .collect::<Result<Vec<_>, HadamardError>>()?;
        let b = kernel_constants(spec.m);
        Ok(Self { m: spec.m, rank: coeffs.rank(), beta1: b.beta1, beta2: b.beta2, eps: spec.eps_schedule.clone(), pairs: pairs.to_vec(), values })
    }

    pub fn value(&self, pair: usize, eps: usize) -> FibreMatrix {
        let v = &self.values[pair][eps];
        FibreMatrix::from_fn(self.rank, self.rank, |i, j| {
            let e = v[i * self.rank + j];
            C64::new(e[0], e[1])
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().flatten().all(|e| e[0].is_finite() && e[1].is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::BundleModel;
    use crate::geometry::ChartBox;
    use crate::hadamard::ChiWindow;
    use std::f64::consts::PI;

    #[test]
    fn flat_four_dimensional_massless_kernel_is_closed_form() {
        let geom = SpacetimeModel::minkowski(4, 2.0);
        let spec = SeriesSpec::new(4, 0, 1.0);
        let ev = FlatKleinGordon { mass: 0.0 };
        let x = [0.3, 0.1, -0.2, 0.4];
        let y = [-0.1, 0.2, 0.1, 0.0];
        let eps = 0.05;
        let k = kernel_eps(&geom, &spec, &ev, &x, &y, eps).unwrap()[(0, 0)];
        let s = -(0.4f64).powi(2) + 0.01 + 0.09 + 0.16;
        let expect = C64::new(1.0 / (2.0 * PI * PI), 0.0) / C64::new(s + eps * eps, -2.0 * eps * 0.4);
        assert!((k - expect).norm() <= 1e-15 * expect.norm());
    }

    #[test]
    fn spacelike_imaginary_part_vanishes() {
        let geom = SpacetimeModel::minkowski(3, 2.0);
        let spec = SeriesSpec::new(3, 0, 1.0);
        let ev = FlatKleinGordon { mass: 0.0 };
        let x = [0.1, 0.8, 0.0];
        let y = [0.0, 0.0, 0.0];
        let ims: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| kernel_eps(&geom, &spec, &ev, &x, &y, e).unwrap()[(0, 0)].im.abs()).collect();
        assert!(ims[2] < ims[1] && ims[1] < ims[0] && ims[2] < 1e-6);
    }

    #[test]
    fn chi_zero_gives_zero() {
        let geom = SpacetimeModel::minkowski(3, 1.0);
        let mut spec = SeriesSpec::new(3, 0, 1.0);
        spec.chi = Some(ChiWindow::for_chart(&ChartBox::cube(3, 1.0)));
        let k = kernel_eps(&geom, &spec, &FlatKleinGordon { mass: 1.0 }, &[0.95, 0.0, 0.0], &[0.0; 3], 0.1).unwrap();
        assert_eq!(k[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn branch_cut_is_reported() {
        assert!(matches!(regularized_power(3, C64::new(-1.0, 0.0)), Err(HadamardError::BranchCutHit { .. })));
        assert!(regularized_power(3, C64::new(-1.0, 1e-300)).is_ok());
    }

    #[test]
    fn hermiticity_pattern_on_flat_pairs() {
        let geom = SpacetimeModel::minkowski(4, 2.0);
        let spec = SeriesSpec::new(4, 1, 1.0);
        let ev = FlatKleinGordon { mass: 0.7 };
        let x = [0.5, 0.1, 0.0, 0.2];
        let y = [0.0, -0.1, 0.3, 0.0];
        let a = kernel_eps(&geom, &spec, &ev, &x, &y, 0.03).unwrap()[(0, 0)];
        let b = kernel_eps(&geom, &spec, &ev, &y, &x, 0.03).unwrap()[(0, 0)];
        assert!((a - b.conj()).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn transport_evaluator_flat_coincidence() {
        let op = Arc::new(WaveOperator::new(SpacetimeModel::minkowski(4, 2.0), BundleModel::klein_gordon(4, 0.9)));
        let ev = TransportEvaluator::new(op);
        let c = ev.coincidence(&[0.0; 4], 1).unwrap();
        assert_eq!(c[0][(0, 0)], C64::new(1.0, 0.0));
        assert!((c[1][(0, 0)].re + 0.81 / 2.0).abs() < 1e-5 * 0.405);
        let kg = ev.coefficients(&[0.3, 0.1, 0.0, 0.0], &[0.0; 4], 1).unwrap();
        assert!((kg[1][(0, 0)].re + 0.405).abs() < 1e-8);
    }

    #[test]
    fn sampled_kernel_is_finite() {
        let geom = SpacetimeModel::minkowski(3, 2.0);
        let spec = SeriesSpec::new(3, 0, 1.0);
        let pairs = vec![(vec![0.2, 0.0, 0.1], vec![0.0; 3]), (vec![0.0, 0.5, 0.0], vec![0.1, 0.0, 0.0])];
        let k = RegularizedKernel::sample(&geom, &spec, &FlatKleinGordon { mass: 0.0 }, &pairs).unwrap();
        assert!(k.all_finite());
        assert_eq!(k.values[0].len(), 4);
        assert!((k.value(1, 0)[(0, 0)].re - k.values[1][0][0][0]).abs() == 0.0);
    }
}
