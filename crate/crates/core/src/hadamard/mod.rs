//! Hadamard coefficients, regularized two-point kernels, their distributional
//! pairings and the flat-space Riesz distributions.

pub mod kernel;
pub mod pairing;
pub mod riesz;
pub mod series;
pub mod transport;

use crate::bundle::BundleError;
use crate::geometry::{ChartBox, GeometryError};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use thiserror::Error;

pub use kernel::{kernel_eps, regularized_power, CoefficientEvaluator, FlatKleinGordon, RegularizedKernel, TransportEvaluator};
pub use pairing::{
    commutator_identity_check, evaluate_distribution, time_function_pairing, CommutatorReport, FlatPairing, Gaussian, PairingValue,
};
pub use riesz::{local_parametrix, riesz, GridFunction, RadialGaussPoly, RieszInput};
pub use series::{assemble_series, AssembledSeries, HadamardSeries};
pub use transport::{transport_coefficients, CoefficientTable, RayTable, TransportOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HadamardError {
    #[error("fan ray with lattice offset {offset:?} leaves the chart")]
    FanTooNarrow { offset: Vec<i32> },
    #[error("{what} is not defined for m = {m}")]
    BadParity { what: &'static str, m: usize },
    #[error("regularized argument {re} + {im}i lies on the branch cut; perturb ε")]
    BranchCutHit { re: f64, im: f64 },
    #[error("ε-extrapolation did not converge: error estimate {error:e} exceeds tolerance {tol:e}")]
    NonConvergent { error: f64, tol: f64 },
    #[error("reaching α = {alpha} by descent needs derivative data of the test function")]
    NeedsDerivatives { alpha: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// The symbol `(α, k) = α(α+2)…(α+2k−2)`, with `(α, 0) = 1`.
pub fn pochhammer_even(alpha: f64, k: usize) -> f64 {
    (0..k).map(|j| alpha + 2.0 * j as f64).product()
}

/// Normalization constants of the regularized kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaConstants {
    pub beta1: f64,
    /// Only defined in even dimension.
    pub beta2: Option<f64>,
}

pub fn beta_constants(m: usize) -> BetaConstants {
    let mf = m as f64;
    if m % 2 == 1 {
        let sign = if ((m + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        BetaConstants { beta1: 0.5 * sign * PI.powf((2.0 - mf) / 2.0) / gamma((4.0 - mf) / 2.0), beta2: None }
    } else {
        let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
        BetaConstants {
            beta1: -0.5 * PI.powf(-mf / 2.0) * gamma(mf / 2.0 - 1.0),
            beta2: Some(sign * 2f64.powf(1.0 - mf) * PI.powf(-mf / 2.0) / gamma(mf / 2.0)),
        }
    }
}

/// Constants used by the kernels: the printed closed forms with the overall
/// sign in even dimension fixed by `G^(1)(−) = iR(2)`, `G^(2)(−) = iR(m)`
/// for the pairing `∫∫ f(p) G_ε(p, q) f′(q)`.
pub fn kernel_constants(m: usize) -> BetaConstants {
    let b = beta_constants(m);
    if m % 2 == 0 {
        BetaConstants { beta1: -b.beta1, beta2: b.beta2.map(|v| -v) }
    } else {
        b
    }
}

/// Riesz normalization `β(α, m) = 2^{1−α} π^{(2−m)/2} / [Γ((α−m)/2 + 1) Γ(α/2)]`.
pub fn riesz_beta(alpha: f64, m: usize) -> f64 {
    let mf = m as f64;
    2f64.powf(1.0 - alpha) * PI.powf((2.0 - mf) / 2.0) * rgamma((alpha - mf) / 2.0 + 1.0) * rgamma(alpha / 2.0)
}

/// `1/Γ(x)`, zero at the poles.
pub(crate) fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Time function on the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFunction {
    /// `t(x) = x^axis`.
    Coordinate { axis: usize },
    /// `t(x) = x^axis + amplitude·tanh(x^along)`.
    TanhPerturbed { axis: usize, amplitude: f64, along: usize },
}

impl Default for TimeFunction {
    fn default() -> Self {
        TimeFunction::Coordinate { axis: 0 }
    }
}

impl TimeFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TimeFunction::Coordinate { axis } => x[axis],
            TimeFunction::TanhPerturbed { axis, amplitude, along } => x[axis] + amplitude * x[along].tanh(),
        }
    }
}

/// C^∞ monotone step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

/// Cutoff on pairs: `χ(x, y) = w(x) w(y)` where `w` is a product of 1D
/// bridges equal to 1 on the inner box and 0 outside the outer box, both
/// centered in the chart with edge fractions `inner`, `outer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiWindow {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl ChiWindow {
    pub fn for_chart(chart: &ChartBox) -> Self {
        Self::with_fractions(chart, 0.6, 0.9)
    }

    pub fn with_fractions(chart: &ChartBox, inner: f64, outer: f64) -> Self {
        let half = (0..chart.lo.len()).map(|i| 0.5 * chart.extent(i)).collect();
        Self { center: chart.center(), half, inner, outer }
    }

    pub fn point(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(v, (c, h))| {
                let u = (v - c).abs() / h;
                1.0 - smooth_step((u - self.inner) / (self.outer - self.inner))
            })
            .product()
    }

    pub fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        self.point(x) * self.point(y)
    }
}

/// `{1e−1, 5e−2, 2.5e−2, 1.25e−2} × scale`.
pub fn default_eps_schedule(scale: f64) -> Vec<f64> {
    [0.1, 0.05, 0.025, 0.0125].iter().map(|e| e * scale).collect()
}

/// Truncation and regularization data of a Hadamard series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub m: usize,
    pub n: usize,
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub t_func: TimeFunction,
    /// `None` means `χ ≡ 1`.
    pub chi: Option<ChiWindow>,
}

impl SeriesSpec {
    pub fn new(m: usize, n: usize, scale: f64) -> Self {
        Self { m, n, eps_schedule: default_eps_schedule(scale), t_func: TimeFunction::default(), chi: None }
    }

    pub fn validate(&self) -> Result<(), HadamardError> {
        if self.m < 3 {
            return Err(HadamardError::InvalidInput(format!("dimension {} < 3", self.m)));
        }
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(HadamardError::InvalidInput("ε schedule must be non-empty and positive".into()));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HadamardError::InvalidInput("ε schedule must be strictly decreasing".into()));
        }
        if let Some(chi) = &self.chi {
            if !(0.0 < chi.inner && chi.inner < chi.outer && chi.outer <= 1.0) {
                return Err(HadamardError::InvalidInput("χ fractions must satisfy 0 < inner < outer ≤ 1".into()));
            }
        }
        Ok(())
    }

    pub fn chi_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.chi.as_ref().map_or(1.0, |c| c.pair(x, y))
    }

    /// Number of Hadamard coefficients `U_0..U_K` the series needs.
    pub fn required_order(&self) -> usize {
        HadamardSeries::new(self.m, self.n).required_order()
    }
}
