//! Built-in analytic metric fields.

use serde::{Deserialize, Serialize};
use std::fmt::Debug;

/// Analytic metric field `x ↦ g_{μν}(x)` written into row-major buffers.
pub trait MetricField: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    /// Writes `g_{μν}(x)` into `g` (length `m*m`).
    fn metric(&self, x: &[f64], g: &mut [f64]);
    /// Writes `∂_λ g_{μν}(x)` into `dg[λ*m*m + μ*m + ν]` and returns true, or
    /// returns false when no closed form is available.
    fn metric_derivs(&self, _x: &[f64], _dg: &mut [f64]) -> bool {
        false
    }
}

/// Flat metric η = diag(1, −1, …, −1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minkowski {
    pub m: usize,
}

impl MetricField for Minkowski {
    fn dim(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        "minkowski"
    }
    fn metric(&self, _x: &[f64], g: &mut [f64]) {
        eta_into(self.m, 1.0, g);
    }
    fn metric_derivs(&self, _x: &[f64], dg: &mut [f64]) -> bool {
        dg[..self.m.pow(3)].fill(0.0);
        true
    }
}

fn eta_into(m: usize, scale: f64, g: &mut [f64]) {
    g[..m * m].fill(0.0);
    g[0] = scale;
    for i in 1..m {
        g[i * m + i] = -scale;
    }
}

/// Conformally flat metric a(t)²·η with a(t) = 1 + c·t², t = x⁰.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conformal {
    pub m: usize,
    pub c: f64,
}

impl Conformal {
    pub fn scale_factor(&self, t: f64) -> f64 {
        1.0 + self.c * t * t
    }
}

impl MetricField for Conformal {
    fn dim(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        "conformal"
    }
    fn metric(&self, x: &[f64], g: &mut [f64]) {
        let a = self.scale_factor(x[0]);
        eta_into(self.m, a * a, g);
    }
    fn metric_derivs(&self, x: &[f64], dg: &mut [f64]) -> bool {
        let m = self.m;
        dg[..m * m * m].fill(0.0);
        let a = self.scale_factor(x[0]);
        let da = 2.0 * self.c * x[0];
        eta_into(m, 2.0 * a * da, &mut dg[..m * m]);
        true
    }
}

/// Ultrastatic metric dt² − ψ(x⃗)·δ_ij dx^i dx^j with a Gaussian bump
/// ψ = 1 + A·exp(−|x⃗ − c|²/w²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltrastaticBump {
    pub m: usize,
    pub amplitude: f64,
    pub width: f64,
    pub center: Vec<f64>,
}

impl UltrastaticBump {
    fn psi(&self, x: &[f64]) -> (f64, f64) {
        let r2: f64 = (1..self.m).map(|i| (x[i] - self.center[i - 1]).powi(2)).sum();
        let e = self.amplitude * (-r2 / (self.width * self.width)).exp();
        (1.0 + e, e)
    }
}

impl MetricField for UltrastaticBump {
    fn dim(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        "ultrastatic-bump"
    }
    fn metric(&self, x: &[f64], g: &mut [f64]) {
        let m = self.m;
        let (psi, _) = self.psi(x);
        g[..m * m].fill(0.0);
        g[0] = 1.0;
        for i in 1..m {
            g[i * m + i] = -psi;
        }
    }
    fn metric_derivs(&self, x: &[f64], dg: &mut [f64]) -> bool {
        let m = self.m;
        dg[..m * m * m].fill(0.0);
        let (_, e) = self.psi(x);
        for l in 1..m {
            let dpsi = -2.0 * (x[l] - self.center[l - 1]) / (self.width * self.width) * e;
            for i in 1..m {
                dg[l * m * m + i * m + i] = -dpsi;
            }
        }
        true
    }
}

/// Wraps a field and hides its closed-form derivatives, forcing the
/// finite-difference path. Used to cross-check the two code paths.
#[derive(Debug, Clone)]
pub struct WithoutDerivatives<F>(pub F);

impl<F: MetricField> MetricField for WithoutDerivatives<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn name(&self) -> &str {
        self.0.name()
    }
    fn metric(&self, x: &[f64], g: &mut [f64]) {
        self.0.metric(x, g)
    }
}
