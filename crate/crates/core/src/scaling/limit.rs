//! Sequences of scaled pairings, their λ → 0 limits and flat references.

use super::momentum::MomentumPairing;
use super::{ScalingError, ScalingProbe};
use crate::bundle::{make_gamma_matrices, FibreVector};
use crate::hadamard::pairing::FlatKernel;
use crate::hadamard::{default_eps_schedule, FlatPairing, Gaussian, PairingValue};
use crate::numerics::{richardson, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// A two-point function that can be paired with dilated Gaussians given in
/// the probe's normal coordinates.
pub trait ScaledPairing: Sync {
    fn dim(&self) -> usize;
    /// `ω₂(D_λ f ⊗ D_λ f′)`.
    fn scaled(&self, probe: &ScalingProbe, lambda: f64, f: &Gaussian, f2: &Gaussian) -> Result<PairingValue, ScalingError>;
    /// The same along several λ; engines that share work between λ override it.
    fn sequence(&self, probe: &ScalingProbe, lambdas: &[f64], f: &Gaussian, f2: &Gaussian) -> Result<Vec<PairingValue>, ScalingError> {
        lambdas.par_iter().map(|&l| self.scaled(probe, l, f, f2)).collect()
    }
}

/// A translation-invariant flat kernel paired in position space. The
/// dilated Gaussians are exact (`x = p + λζ`), and the ε schedule shrinks
/// with λ so the regulator keeps its size relative to the test functions.
#[derive(Debug, Clone)]
pub struct FlatScaled {
    pub pairing: FlatPairing,
}

impl FlatScaled {
    pub fn new(kernel: FlatKernel) -> Self {
        Self { pairing: FlatPairing::new(kernel) }
    }
}

fn dilated(f: &Gaussian, lambda: f64, alpha: f64) -> Gaussian {
    let mut g = f.dilate(lambda);
    g.amplitude *= lambda.powf(-alpha);
    g
}

fn narrowest(f: &Gaussian, f2: &Gaussian) -> f64 {
    f.sigma_t.min(f.sigma_x).min(f2.sigma_t).min(f2.sigma_x)
}

impl ScaledPairing for FlatScaled {
    fn dim(&self) -> usize {
        self.pairing.kernel.m
    }

    fn scaled(&self, probe: &ScalingProbe, lambda: f64, f: &Gaussian, f2: &Gaussian) -> Result<PairingValue, ScalingError> {
        probe.check_lambda(lambda)?;
        let m = self.dim();
        let identity = (0..m).all(|mu| (0..m).all(|a| (probe.frame[mu * m + a] - if mu == a { 1.0 } else { 0.0 }).abs() < 1e-14));
        if !identity {
            return Err(ScalingError::InvalidInput("flat position-space pairing needs the Minkowski frame".into()));
        }
        let (a, b) = (dilated(f, lambda, probe.alpha), dilated(f2, lambda, probe.alpha));
        let eps = default_eps_schedule(lambda * narrowest(f, f2));
        Ok(self.pairing.pair(&a, &b, &eps, None)?)
    }
}

/// Controls for [`scaling_limit_pairing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    /// Leading power of λ in the Richardson extrapolation of the sequence.
    pub leading_power: u32,
    /// Absolute step size below which the sequence counts as converged.
    pub cauchy_tol: f64,
    /// Accuracy the scaled-pairing quadrature is required to meet, relative
    /// to the flat reference.
    pub quad_rel_tol: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { leading_power: 1, cauchy_tol: 1e-6, quad_rel_tol: 1e-5 }
    }
}

/// Values of a scaled pairing along the probe's λ sequence together with the
/// flat reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<C64>,
    pub errors: Vec<f64>,
    pub reference: C64,
    pub reference_error: f64,
    /// `|value(λ) − reference|`.
    pub gaps: Vec<f64>,
    /// Richardson extrapolation of the sequence to λ = 0.
    pub limit: C64,
    pub limit_error: f64,
    pub alpha: f64,
    pub center: Vec<f64>,
    pub frame: Vec<f64>,
    pub frame_label: String,
    /// `quad_rel_tol·|reference|`.
    pub quad_tolerance: f64,
    /// Every error estimate of the sequence is within `quad_tolerance`.
    pub within_tolerance: bool,
}

impl ScalingReport {
    fn assemble(probe: &ScalingProbe, seq: Vec<PairingValue>, reference: &PairingValue, opts: &LimitOptions) -> Result<Self, ScalingError> {
        let values: Vec<C64> = seq.iter().map(|v| v.value).collect();
        let errors: Vec<f64> = seq.iter().map(|v| v.error).collect();
        let steps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        if let [.., previous, last] = steps[..] {
            let floor = opts.cauchy_tol + 2.0 * errors[errors.len() - 2..].iter().sum::<f64>();
            if last > floor && last >= previous {
                return Err(ScalingError::NonConvergent { last, previous });
            }
        }
        let floor = errors.iter().sum();
        let quad_tolerance = opts.quad_rel_tol * reference.value.norm();
        let ex = richardson::extrapolate(&probe.lambda_seq, &values, opts.leading_power, floor);
        let within_tolerance = errors.iter().all(|e| *e <= quad_tolerance);
        Ok(Self {
            lambdas: probe.lambda_seq.clone(),
            gaps: values.iter().map(|v| (v - reference.value).norm()).collect(),
            values,
            errors,
            reference: reference.value,
            reference_error: reference.error,
            limit: ex.value,
            limit_error: ex.error,
            alpha: probe.alpha,
            center: probe.center.clone(),
            frame: probe.frame.clone(),
            frame_label: probe.frame_label.clone(),
            within_tolerance,
            quad_tolerance,
        })
    }

    /// Columns `lambda,re,im,error,ref_re,ref_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,re,im,error,ref_re,ref_im\n");
        for ((l, v), e) in self.lambdas.iter().zip(&self.values).zip(&self.errors) {
            writeln!(out, "{l:e},{:e},{:e},{e:e},{:e},{:e}", v.re, v.im, self.reference.re, self.reference.im).expect("string write");
        }
        out
    }
}

/// `ω₂(D_λ f ⊗ D_λ f′)` along the probe's λ sequence, in parallel.
pub fn scaled_sequence(pairing: &dyn ScaledPairing, probe: &ScalingProbe, f: &Gaussian, f2: &Gaussian) -> Result<Vec<PairingValue>, ScalingError> {
    if pairing.dim() != probe.dim() || f.dim() != probe.dim() || f2.dim() != probe.dim() {
        return Err(ScalingError::InvalidInput("dimension mismatch".into()));
    }
    for &l in &probe.lambda_seq {
        probe.check_lambda(l)?;
    }
    pairing.sequence(probe, &probe.lambda_seq, f, f2)
}

/// `G^(1)_η(f ⊗ f′)` for sections already written in the tangent space at
/// the probe centre (the fibre frame is trivial, so Θ acts as the identity).
pub fn flat_reference(f: &Gaussian, f2: &Gaussian) -> Result<PairingValue, ScalingError> {
    let engine = FlatPairing::new(FlatKernel::g1(f.dim()));
    Ok(engine.pair(f, f2, &default_eps_schedule(narrowest(f, f2)), None)?)
}

/// Scaled pairings of `f`, `f′` with the probe's exponent, the Cauchy check,
/// the extrapolated limit and the flat massless reference.
pub fn scaling_limit_pairing(
    pairing: &dyn ScaledPairing,
    probe: &ScalingProbe,
    f: &Gaussian,
    f2: &Gaussian,
    opts: &LimitOptions,
) -> Result<ScalingReport, ScalingError> {
    let seq = scaled_sequence(pairing, probe, f, f2)?;
    let reference = flat_reference(f, f2)?;
    ScalingReport::assemble(probe, seq, &reference, opts)
}

/// Spinor scaled pairings `ω₂(D_▷ D_λ f ⊗ D_λ f′)` with `f = φ u`, `f′ = φ′ v`
/// split into the derivative part `γ^μ∂_μ` and the mass part `i𝗆`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracScalingReport {
    /// `Σ_μ (vᵀγ^μ u) G^(1)(∂_μ D_λ φ ⊗ D_λ φ′)` against its flat reference.
    pub derivative: ScalingReport,
    /// `i𝗆 (vᵀu) G_𝗆(D_λ φ ⊗ D_λ φ′)` along the λ sequence.
    pub mass_term: Vec<C64>,
    pub mass_term_errors: Vec<f64>,
    /// `|mass_term(λ_{i+1})| / |mass_term(λ_i)|`; one power of λ gives the
    /// ratio of consecutive λ values.
    pub mass_ratios: Vec<f64>,
}

fn bilinear(a: &FibreVector, b: &FibreVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `G^(1)_η(γ^μ∂_μ f ⊗ f′)` with `∂_μ` taken as minus the derivative in the
/// centre of `f`, by central differences.
fn flat_derivative_reference(f: &Gaussian, f2: &Gaussian, coeff: &[C64]) -> Result<PairingValue, ScalingError> {
    let h = 3e-3 * f.sigma_t.min(f.sigma_x);
    let shifted = |mu: usize, t: f64| -> Result<PairingValue, ScalingError> {
        let mut g = f.clone();
        g.center[mu] += t;
        flat_reference(&g, f2)
    };
    let mut value = C64::new(0.0, 0.0);
    let mut error = 0.0;
    for (mu, c) in coeff.iter().enumerate() {
        let (p, q) = (shifted(mu, h)?, shifted(mu, -h)?);
        value -= c * (p.value - q.value) / (2.0 * h);
        error += c.norm() * (p.error + q.error) / (2.0 * h);
    }
    Ok(PairingValue { value, error, per_eps: vec![], quad_error: error })
}

/// Spinor version of [`scaling_limit_pairing`] in flat space: the
/// derivative term from the massless mode sum (exact `−i a_μ` factor), the
/// mass term from the massive flat kernel, and the flat reference of the
/// derivative term by finite differences of position-space pairings.
#[allow(clippy::too_many_arguments)]
pub fn dirac_scaling_limit(
    engine: &MomentumPairing,
    massive: &FlatScaled,
    probe: &ScalingProbe,
    f: &Gaussian,
    f2: &Gaussian,
    u: &FibreVector,
    v: &FibreVector,
    mass: f64,
    opts: &LimitOptions,
) -> Result<DiracScalingReport, ScalingError> {
    let m = probe.dim();
    if !engine.model().is_flat_minkowski() {
        return Err(ScalingError::InvalidInput("the spinor scaling limit is implemented for flat spacetimes".into()));
    }
    let gammas = make_gamma_matrices(m)?;
    if u.len() != gammas[0].nrows() || v.len() != u.len() {
        return Err(ScalingError::InvalidInput("spinor rank mismatch".into()));
    }
    // vᵀ γ^μ u with γ^μ = η^{μμ} γ_μ
    let coeff: Vec<C64> = gammas
        .iter()
        .enumerate()
        .map(|(mu, g)| bilinear(v, &(g * u)) * if mu == 0 { 1.0 } else { -1.0 })
        .collect();
    // ∂_μ e^{i a·x} pairs to −i a_μ with a = κ/λ
    let factor = |l: f64, kappa: &[f64]| -> C64 { coeff.iter().zip(kappa).map(|(c, k)| c * C64::new(0.0, -k / l)).sum() };
    let seq = engine.sequence_with(probe, &probe.lambda_seq, f, f2, &factor)?;
    let reference = flat_derivative_reference(f, f2, &coeff)?;
    let derivative = ScalingReport::assemble(probe, seq, &reference, opts)?;
    let pref = C64::new(0.0, mass) * bilinear(v, u);
    let mass_seq = scaled_sequence(massive, probe, f, f2)?;
    let mass_term: Vec<C64> = mass_seq.iter().map(|p| p.value * pref).collect();
    let mass_term_errors = mass_seq.iter().map(|p| p.error * pref.norm()).collect();
    let mass_ratios = mass_term.windows(2).map(|w| w[1].norm() / w[0].norm()).collect();
    Ok(DiracScalingReport { derivative, mass_term, mass_term_errors, mass_ratios })
}
