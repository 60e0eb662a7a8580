//! Windowed-Fourier decay estimator for wavefront directions.
//!
//! At each probe point the samples are multiplied by a truncated Gaussian
//! window of radius `R` (width `σ = R/8`), transformed with [`fft_nd`], and along
//! each grid direction the maxima of `|û|` inside a cone of half-angle
//! `aperture` are collected in logarithmic radial bins over
//! `[k_N/2, k_N − 6/σ]`. A least-squares fit of `log|û|` against `log|k|`
//! gives a decay exponent `N`; the direction is flagged when `N` is below the
//! threshold and reported as marginal when within `marginal_band` of it.

use super::directions::DirectionGrid;
use super::sampled::{fft_nd, frequency, SampledDistribution};
use super::MicrolocalError;
use crate::numerics::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Window radius over Gaussian width; the cut-off kink sits at `e^{−32}`.
const WIDTH: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub decay_threshold: f64,
    /// Values below `floor × Σ|χu|` count as fully decayed; a direction with
    /// half of its radial bins at the floor is not flagged.
    pub floor: f64,
    /// Cone half-angle per direction; half a grid cell when `None`.
    pub aperture: Option<f64>,
    pub marginal_band: f64,
    pub bins: usize,
    pub min_samples: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { decay_threshold: 4.0, floor: 1e-8, aperture: None, marginal_band: 0.5, bins: 8, min_samples: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfSample {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub exponent: f64,
    pub confidence: f64,
    pub marginal: bool,
}

impl WfSample {
    pub fn flagged(&self, threshold: f64) -> bool {
        self.exponent < threshold
    }
}

/// Flagged and marginal directions per probe point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontEstimate {
    pub samples: Vec<WfSample>,
    pub window_scale: f64,
    pub n_directions: usize,
    pub cell_angle: f64,
    pub decay_threshold: f64,
}

impl WavefrontEstimate {
    /// Directions flagged with exponent below threshold, marginal ones included.
    pub fn flagged(&self) -> impl Iterator<Item = &WfSample> {
        self.samples.iter().filter(move |s| s.flagged(self.decay_threshold))
    }

    /// Flagged and not marginal.
    pub fn confident(&self) -> impl Iterator<Item = &WfSample> {
        self.flagged().filter(|s| !s.marginal)
    }

    pub fn flagged_at(&self, point: &[f64]) -> Vec<&WfSample> {
        self.flagged().filter(|s| s.point.iter().zip(point).all(|(a, b)| (a - b).abs() < 1e-12)).collect()
    }
}

/// `(e^{−r²/2σ²} − e^{−R²/2σ²})₊` normalized to 1 at the centre.
fn window(r2: f64, radius: f64) -> f64 {
    let s2 = (radius / WIDTH).powi(2);
    let edge = (-radius * radius / (2.0 * s2)).exp();
    ((-r2 / (2.0 * s2)).exp() - edge).max(0.0) / (1.0 - edge)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Decay exponents per direction of already windowed patch channels.
fn decay_exponents(
    channels: Vec<Vec<C64>>,
    shape: &[usize],
    spacing: &[f64],
    sigma: f64,
    dirs: &DirectionGrid,
    opts: &EstimatorOptions,
) -> Result<Vec<f64>, MicrolocalError> {
    let d = shape.len();
    let k_n = spacing.iter().map(|h| PI / h).fold(f64::INFINITY, f64::min);
    let (k_lo, k_hi) = (0.5 * k_n, k_n - 6.0 / sigma);
    if k_hi < 1.2 * k_lo {
        return Err(MicrolocalError::GridTooCoarse(format!("fit range [{k_lo:.3}, {k_hi:.3}] too narrow; enlarge the window")));
    }
    let nb = opts.bins;
    let (l_lo, l_hi) = (k_lo.ln(), k_hi.ln());
    let centres: Vec<f64> = (0..nb).map(|b| l_lo + (b as f64 + 0.5) * (l_hi - l_lo) / nb as f64).collect();
    let cos_ap = opts.aperture.unwrap_or(0.5 * dirs.cell_angle).cos();
    let freqs: Vec<Vec<f64>> = (0..d).map(|a| (0..shape[a]).map(|j| frequency(j, shape[a], spacing[a])).collect()).collect();
    let mut result = vec![f64::INFINITY; dirs.dirs.len()];
    for mut data in channels {
        let scale: f64 = data.iter().map(|v| v.norm()).sum();
        if scale == 0.0 {
            continue;
        }
        fft_nd(&mut data, shape);
        let mut maxima = vec![vec![0.0f64; nb]; dirs.dirs.len()];
        let mut k = vec![0.0; d];
        for (idx, v) in data.iter().enumerate() {
            let mut rest = idx;
            for a in (0..d).rev() {
                k[a] = freqs[a][rest % shape[a]];
                rest /= shape[a];
            }
            let kk = k.iter().map(|x| x * x).sum::<f64>().sqrt();
            if kk < k_lo || kk > k_hi {
                continue;
            }
            let bin = (((kk.ln() - l_lo) / (l_hi - l_lo) * nb as f64) as usize).min(nb - 1);
            let mag = v.norm() / scale;
            for (dir, mx) in dirs.dirs.iter().zip(maxima.iter_mut()) {
                let dot: f64 = dir.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / kk;
                if dot >= cos_ap && mag > mx[bin] {
                    mx[bin] = mag;
                }
            }
        }
        for (res, mx) in result.iter_mut().zip(&maxima) {
            // bins at the floor are dropped; reaching it inside the range counts as decay
            let (xs, ys): (Vec<f64>, Vec<f64>) = centres.iter().zip(mx).filter(|(_, v)| **v > opts.floor).map(|(c, v)| (*c, v.ln())).unzip();
            if xs.len() < 3 || 2 * xs.len() < nb {
                continue;
            }
            *res = res.min(-least_squares_slope(&xs, &ys));
        }
    }
    Ok(result)
}

fn samples_from(point: &[f64], exps: &[f64], dirs: &DirectionGrid, opts: &EstimatorOptions) -> Vec<WfSample> {
    let thr = opts.decay_threshold;
    exps.iter()
        .zip(&dirs.dirs)
        .filter(|(e, _)| **e < thr + opts.marginal_band)
        .map(|(e, dir)| WfSample {
            point: point.to_vec(),
            direction: dir.clone(),
            exponent: *e,
            confidence: ((thr - e).abs() / thr).min(1.0),
            marginal: (e - thr).abs() < opts.marginal_band,
        })
        .collect()
}

/// Local estimate at each probe point with window radius `window_scale`.
pub fn estimate_wavefront(
    u: &SampledDistribution,
    probes: &[Vec<f64>],
    window_scale: f64,
    dirs: &DirectionGrid,
    opts: &EstimatorOptions,
) -> Result<WavefrontEstimate, MicrolocalError> {
    let d = u.dim();
    if dirs.dim() != d {
        return Err(MicrolocalError::InvalidInput("direction grid dimension differs from the sample grid".into()));
    }
    let per_probe: Vec<Vec<WfSample>> = probes
        .par_iter()
        .map(|p| -> Result<Vec<WfSample>, MicrolocalError> {
            let mut lo = vec![0usize; d];
            let mut shape = vec![0usize; d];
            for a in 0..d {
                if p[a] - window_scale < u.origin[a] - 1e-12 || p[a] + window_scale > u.upper(a) + 1e-12 {
                    return Err(MicrolocalError::WindowClipped { point: p.clone() });
                }
                let h = u.spacing[a];
                let i0 = ((p[a] - window_scale - u.origin[a]) / h - 1e-9).ceil().max(0.0) as usize;
                let i1 = (((p[a] + window_scale - u.origin[a]) / h + 1e-9).floor() as usize).min(u.shape[a] - 1);
                lo[a] = i0;
                shape[a] = i1 + 1 - i0;
                if shape[a] < opts.min_samples {
                    return Err(MicrolocalError::GridTooCoarse(format!("window holds {} samples along axis {a}, need {}", shape[a], opts.min_samples)));
                }
            }
            let total: usize = shape.iter().product();
            let mut weights = Vec::with_capacity(total);
            let mut src = Vec::with_capacity(total);
            for idx in 0..total {
                let mut rest = idx;
                let mut flat = 0usize;
                let mut r2 = 0.0;
                let mut stride = 1usize;
                let mut offs = vec![0usize; d];
                for a in (0..d).rev() {
                    offs[a] = lo[a] + rest % shape[a];
                    rest /= shape[a];
                }
                for a in (0..d).rev() {
                    flat += offs[a] * stride;
                    stride *= u.shape[a];
                    let x = u.origin[a] + u.spacing[a] * offs[a] as f64;
                    r2 += (x - p[a]).powi(2);
                }
                weights.push(window(r2, window_scale));
                src.push(flat);
            }
            let channels: Vec<Vec<C64>> = u.channels.iter().map(|c| src.iter().zip(&weights).map(|(i, w)| c[*i] * *w).collect()).collect();
            let exps = decay_exponents(channels, &shape, &u.spacing, window_scale / WIDTH, dirs, opts)?;
            Ok(samples_from(p, &exps, dirs, opts))
        })
        .collect::<Result<_, _>>()?;
    Ok(WavefrontEstimate {
        samples: per_probe.into_iter().flatten().collect(),
        window_scale,
        n_directions: dirs.dirs.len(),
        cell_angle: dirs.cell_angle,
        decay_threshold: opts.decay_threshold,
    })
}

/// Slow-decay cone of a kernel `W(x − y)` sampled in the difference
/// variable: one window over the whole grid, centred on the grid centre.
/// A flagged direction `ξ` stands for `(x, ξ; y, −ξ)`.
pub fn wf_translation_invariant(kernel: &SampledDistribution, dirs: &DirectionGrid, opts: &EstimatorOptions) -> Result<WavefrontEstimate, MicrolocalError> {
    let d = kernel.dim();
    let centre: Vec<f64> = (0..d).map(|a| 0.5 * (kernel.origin[a] + kernel.upper(a))).collect();
    let radius = (0..d).map(|a| 0.5 * (kernel.upper(a) - kernel.origin[a])).fold(f64::INFINITY, f64::min);
    let mut est = estimate_wavefront(kernel, &[centre], radius, dirs, opts)?;
    for s in &mut est.samples {
        s.point = vec![0.0; d];
    }
    Ok(est)
}
