//! Uniformly sampled distributions, the n-dimensional DFT and band-limited
//! samples of the boundary-value distributions used as probes.

use super::MicrolocalError;
use crate::numerics::{quad, C64};
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Complex samples on a regular grid, one array per fibre channel
/// (row-major, last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDistribution {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub channels: Vec<Vec<C64>>,
}

impl SampledDistribution {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>, channels: Vec<Vec<C64>>) -> Result<Self, MicrolocalError> {
        let d = shape.len();
        if d == 0 || d > 4 || origin.len() != d || spacing.len() != d {
            return Err(MicrolocalError::InvalidInput(format!("grid dimension {d} must be 1..=4 with matching origin/spacing")));
        }
        if spacing.iter().any(|h| !(*h > 0.0)) {
            return Err(MicrolocalError::InvalidInput("grid spacing must be positive".into()));
        }
        let n: usize = shape.iter().product();
        if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
            return Err(MicrolocalError::InvalidInput(format!("each channel needs {n} samples")));
        }
        if channels.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(MicrolocalError::InvalidInput("samples must be finite".into()));
        }
        Ok(Self { origin, spacing, shape, channels })
    }

    /// Single-channel grid `x_i = origin + i·spacing`, values `f(x)`.
    pub fn from_fn<F: Fn(&[f64]) -> C64>(origin: &[f64], spacing: &[f64], shape: &[usize], f: F) -> Result<Self, MicrolocalError> {
        let n: usize = shape.iter().product();
        let mut x = vec![0.0; shape.len()];
        let values = (0..n)
            .map(|idx| {
                point_into(origin, spacing, shape, idx, &mut x);
                f(&x)
            })
            .collect();
        Self::new(origin.to_vec(), spacing.to_vec(), shape.to_vec(), vec![values])
    }

    /// Grid of `n` points per axis centred on the origin, `x_i = (i − n/2) h`.
    /// Samples of the band-limited distribution whose Fourier transform
    /// (sign `e^{+ik·x}`) is `spectrum` on the DFT frequencies and zero
    /// outside them. Singular spectra sampled this way do not alias.
    pub fn from_spectrum<F: Fn(&[f64]) -> C64>(origin: &[f64], spacing: &[f64], shape: &[usize], spectrum: F) -> Result<Self, MicrolocalError> {
        let d = shape.len();
        let freq = Self::new(vec![0.0; d], spacing.to_vec(), shape.to_vec(), vec![vec![C64::new(0.0, 0.0); shape.iter().product()]])?;
        let volume: f64 = (0..d).map(|a| 1.0 / (shape[a] as f64 * spacing[a])).product();
        let mut k = vec![0.0; d];
        let mut data: Vec<C64> = (0..freq.len())
            .map(|idx| {
                let mut rest = idx;
                for a in (0..d).rev() {
                    k[a] = frequency(rest % shape[a], shape[a], spacing[a]);
                    rest /= shape[a];
                }
                let shift: f64 = k.iter().zip(origin).map(|(k, o)| k * o).sum();
                spectrum(&k) * C64::from_polar(volume, -shift)
            })
            .collect();
        dft_nd(&mut data, shape, FftDirection::Forward);
        Self::new(origin.to_vec(), spacing.to_vec(), shape.to_vec(), vec![data])
    }

    pub fn centered_origin(h: &[f64], shape: &[usize]) -> Vec<f64> {
        h.iter().zip(shape).map(|(h, n)| -h * (n / 2) as f64).collect()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        point_into(&self.origin, &self.spacing, &self.shape, idx, &mut x);
        x
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * (self.shape[axis] - 1) as f64
    }

    /// Centered difference along `axis` (periodic wrap at the edges).
    pub fn derivative(&self, axis: usize) -> Self {
        let stride: usize = self.shape[axis + 1..].iter().product();
        let n = self.shape[axis];
        let h = self.spacing[axis];
        let channels = self
            .channels
            .iter()
            .map(|c| {
                (0..c.len())
                    .map(|idx| {
                        let i = (idx / stride) % n;
                        let base = idx - i * stride;
                        let ip = base + ((i + 1) % n) * stride;
                        let im = base + ((i + n - 1) % n) * stride;
                        (c[ip] - c[im]) / (2.0 * h)
                    })
                    .collect()
            })
            .collect();
        Self { channels, ..self.clone() }
    }

    /// Channel-wise sum with another grid of the same layout.
    pub fn add(&self, other: &Self) -> Result<Self, MicrolocalError> {
        if self.shape != other.shape || self.channels.len() != other.channels.len() {
            return Err(MicrolocalError::InvalidInput("grids differ".into()));
        }
        let channels = self.channels.iter().zip(&other.channels).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        Ok(Self { channels, ..self.clone() })
    }
}

fn point_into(origin: &[f64], spacing: &[f64], shape: &[usize], mut idx: usize, x: &mut [f64]) {
    for ax in (0..shape.len()).rev() {
        x[ax] = origin[ax] + spacing[ax] * (idx % shape[ax]) as f64;
        idx /= shape[ax];
    }
}

/// In-place unnormalized DFT `û(k) = Σ u(x) e^{+i k·x}` over a row-major grid.
pub fn fft_nd(data: &mut [C64], shape: &[usize]) {
    dft_nd(data, shape, FftDirection::Inverse);
}

fn dft_nd(data: &mut [C64], shape: &[usize], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    for ax in 0..shape.len() {
        let n = shape[ax];
        if n < 2 {
            continue;
        }
        let stride: usize = shape[ax + 1..].iter().product();
        let fft = planner.plan_fft(n, direction);
        let mut line = vec![C64::new(0.0, 0.0); n];
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Angular frequency of DFT bin `j` on `n` samples of spacing `h`.
pub fn frequency(j: usize, n: usize, h: f64) -> f64 {
    let f = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
    2.0 * PI * f / (n as f64 * h)
}

/// Samples of `1/(x + iε₀)` projected onto the band `|k| < π/h`:
/// `−i (1 − e^{−(ε₀ − ix)π/h}) / (ε₀ − ix)`.
pub fn boundary_value_1d(origin: f64, h: f64, n: usize, eps0: f64) -> Result<SampledDistribution, MicrolocalError> {
    let kn = PI / h;
    SampledDistribution::from_fn(&[origin], &[h], &[n], |x| {
        let a = C64::new(eps0, -x[0]);
        if a.norm() < 1e-14 {
            // limit a → 0
            return C64::new(0.0, -kn);
        }
        C64::new(0.0, -1.0) * (C64::new(1.0, 0.0) - (-a * kn).exp()) / a
    })
}

/// Flat three-dimensional two-point kernel of mass `mass` in the difference
/// variable `u = x − y`, `β (|u⃗|² − (u₀ + iε)²)^{−1/2}` for `mass = 0`,
/// projected onto `|k| < π/h` through its spectral representation
/// `β ∫ (p/ω) e^{−(ε − iu₀)ω} J₀(p|u⃗|) dp`, `ω = (p² + mass²)^{1/2}`.
/// Grid: `n` points per axis centred on 0, time axis 0.
pub fn band_limited_kernel_3d(beta: f64, mass: f64, eps: f64, h: f64, n: usize) -> Result<SampledDistribution, MicrolocalError> {
    let k_max = PI / h;
    // |k|² = ω² + p² on the mass shell
    let p_max = ((k_max * k_max - mass * mass) / 2.0).max(0.0).sqrt();
    let half = (n / 2) as f64;
    let extent = h * half * 3f64.sqrt();
    let panels = ((p_max * (extent + h * half) / PI).ceil() as usize).max(4) + 4;
    let (gx, gw) = quad::gauss_legendre(10);
    let mut p_nodes = Vec::with_capacity(panels * gx.len());
    let mut p_weights = Vec::with_capacity(panels * gx.len());
    for i in 0..panels {
        let (a, b) = (p_max * i as f64 / panels as f64, p_max * (i + 1) as f64 / panels as f64);
        for (x, w) in gx.iter().zip(&gw) {
            p_nodes.push(0.5 * (a + b) + 0.5 * (b - a) * x);
            p_weights.push(0.5 * (b - a) * w);
        }
    }
    let omega: Vec<f64> = p_nodes.iter().map(|p| (p * p + mass * mass).sqrt()).collect();
    let base: Vec<f64> = p_nodes
        .iter()
        .zip(&omega)
        .zip(&p_weights)
        .map(|((p, w), wt)| wt * beta * if *w > 0.0 { p / w } else { 1.0 } * (-eps * w).exp())
        .collect();
    let times: Vec<f64> = (0..n).map(|i| (i as f64 - half) * h).collect();
    let phase: Vec<Vec<C64>> = times.iter().map(|t| omega.iter().map(|w| C64::from_polar(1.0, t * w)).collect()).collect();
    let mut by_radius: HashMap<usize, Vec<C64>> = HashMap::new();
    let idx = |i: usize| i as i64 - half as i64;
    for a in 0..n {
        for b in 0..n {
            let key = (idx(a) * idx(a) + idx(b) * idx(b)) as usize;
            by_radius.entry(key).or_insert_with(|| {
                let r = h * (key as f64).sqrt();
                let radial: Vec<f64> = p_nodes.iter().zip(&base).map(|(p, c)| c * puruspe::Jn(0, p * r)).collect();
                phase.iter().map(|ph| ph.iter().zip(&radial).map(|(e, c)| e * c).sum()).collect()
            });
        }
    }
    let mut values = Vec::with_capacity(n * n * n);
    for t in 0..n {
        for a in 0..n {
            for b in 0..n {
                let key = (idx(a) * idx(a) + idx(b) * idx(b)) as usize;
                values.push(by_radius[&key][t]);
            }
        }
    }
    let origin = vec![-half * h; 3];
    SampledDistribution::new(origin, vec![h; 3], vec![n; 3], vec![values])
}
