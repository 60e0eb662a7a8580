//! Dilations about a point, scaled pairings of two-point functions and
//! their short-distance limits against flat massless reference kernels.
//!
//! Test sections are written in the normal coordinates `ζ` of a probe
//! centred at `p` (orthonormal frame at `p`), so the dilation
//! `δ_λ(exp_p ζ) = exp_p(λζ)` acts linearly and `D_λ f(ζ) = λ^{−α} f(ζ/λ)`.

pub mod limit;
pub mod momentum;

use crate::bundle::BundleError;
use crate::geometry::{normal_coordinates, normal_coordinates_inverse, orthonormal_frame, GeometryError, SpacetimeModel};
use crate::hadamard::{HadamardError, Gaussian};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limit::{
    dirac_scaling_limit, flat_reference, scaled_sequence, scaling_limit_pairing, DiracScalingReport, FlatScaled, LimitOptions, ScaledPairing, ScalingReport,
};
pub use momentum::MomentumPairing;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("support of the dilated section leaves the chart at λ = {lambda}")]
    SupportEscape { lambda: f64 },
    #[error("scaled pairings fail the Cauchy criterion (last step {last:e}, previous {previous:e})")]
    NonConvergent { last: f64, previous: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Hadamard(#[from] HadamardError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Default dilation sequence.
pub const DEFAULT_LAMBDAS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

/// Centre, frame and exponent of a family of dilations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub center: Vec<f64>,
    /// Orthonormal frame at the centre, row-major `e[μ*m + a] = e_a^μ`.
    pub frame: Vec<f64>,
    pub alpha: f64,
    pub lambda_seq: Vec<f64>,
    /// Smallest λ the quadratures are trusted at; smaller values are refused.
    pub lambda_floor: f64,
    /// Description of the fibre frame the dilation is lifted with.
    pub frame_label: String,
}

impl ScalingProbe {
    pub fn new(model: &SpacetimeModel, center: &[f64], alpha: f64, lambda_seq: Vec<f64>) -> Result<Self, ScalingError> {
        if center.len() != model.dim() || !model.chart().contains(center) {
            return Err(GeometryError::OutOfChart(center.to_vec()).into());
        }
        if !alpha.is_finite() {
            return Err(ScalingError::InvalidInput("α must be finite".into()));
        }
        if lambda_seq.is_empty() || lambda_seq.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return Err(ScalingError::InvalidInput("λ values must lie in (0, 1]".into()));
        }
        if lambda_seq.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ScalingError::InvalidInput("λ sequence must be strictly decreasing".into()));
        }
        Ok(Self {
            center: center.to_vec(),
            frame: orthonormal_frame(model, center),
            alpha,
            lambda_seq,
            lambda_floor: 1.0 / 64.0,
            frame_label: "normal-coordinate frame transported radially".into(),
        })
    }

    /// Scalar fields: `α₁ = m/2 + 1`.
    pub fn scalar(model: &SpacetimeModel, center: &[f64]) -> Result<Self, ScalingError> {
        Self::new(model, center, model.dim() as f64 / 2.0 + 1.0, DEFAULT_LAMBDAS.to_vec())
    }

    /// Spinor fields: `α₂ = α₁ − 1/2`.
    pub fn dirac(model: &SpacetimeModel, center: &[f64]) -> Result<Self, ScalingError> {
        Self::new(model, center, model.dim() as f64 / 2.0 + 0.5, DEFAULT_LAMBDAS.to_vec())
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.lambda_floor = floor;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn check_lambda(&self, lambda: f64) -> Result<(), ScalingError> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(ScalingError::InvalidInput(format!("λ = {lambda} outside (0, 1]")));
        }
        if lambda < self.lambda_floor {
            return Err(ScalingError::InvalidInput(format!("λ = {lambda} below the resolution floor {}", self.lambda_floor)));
        }
        Ok(())
    }

    /// Chart point with normal coordinates `ζ`.
    pub fn from_normal(&self, model: &SpacetimeModel, zeta: &[f64]) -> Result<Vec<f64>, GeometryError> {
        normal_coordinates(model, &self.center, zeta)
    }

    pub fn to_normal(&self, model: &SpacetimeModel, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        if x.iter().zip(&self.center).all(|(a, b)| a == b) {
            return Ok(vec![0.0; x.len()]);
        }
        normal_coordinates_inverse(model, &self.center, x)
    }

    /// Components of the fibre-frame lift of `D_λ` on a rank-`r` bundle: the
    /// radially transported frame is the identity in normal coordinates, so
    /// the lift is `λ^{−α}·1`.
    pub fn frame_lift(&self, lambda: f64, rank: usize) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::identity(rank, rank) * lambda.powf(-self.alpha)
    }
}

/// A scalar section (or one fibre component of a section), evaluated at
/// chart points.
pub trait Section: Sync {
    fn eval(&self, x: &[f64]) -> Result<f64, ScalingError>;
    /// Ball in the probe's normal coordinates outside which the section is
    /// negligible: `(centre, radius)`.
    fn support(&self) -> (Vec<f64>, f64);
}

/// Widths beyond which a Gaussian section is treated as zero.
const GAUSSIAN_RADIUS: f64 = 8.0;

/// A Gaussian in the probe's normal coordinates.
pub struct NormalGaussian<'a> {
    pub model: &'a SpacetimeModel,
    pub probe: &'a ScalingProbe,
    pub profile: Gaussian,
}

impl Section for NormalGaussian<'_> {
    fn eval(&self, x: &[f64]) -> Result<f64, ScalingError> {
        Ok(self.profile.eval(&self.probe.to_normal(self.model, x)?))
    }

    fn support(&self) -> (Vec<f64>, f64) {
        (self.profile.center.clone(), GAUSSIAN_RADIUS * self.profile.sigma_t.max(self.profile.sigma_x))
    }
}

/// `D_λ f = λ^{−α} f∘δ_λ^{−1}`.
pub struct Dilated<'a> {
    pub model: &'a SpacetimeModel,
    pub probe: &'a ScalingProbe,
    pub lambda: f64,
    pub inner: &'a dyn Section,
}

impl Section for Dilated<'_> {
    fn eval(&self, x: &[f64]) -> Result<f64, ScalingError> {
        let scale = self.lambda.powf(-self.probe.alpha);
        if self.lambda == 1.0 {
            return Ok(self.inner.eval(x)?);
        }
        let zeta: Vec<f64> = self.probe.to_normal(self.model, x)?.iter().map(|z| z / self.lambda).collect();
        let (c, r) = self.inner.support();
        if zeta.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > r {
            return Ok(0.0);
        }
        Ok(scale * self.inner.eval(&self.probe.from_normal(self.model, &zeta)?)?)
    }

    fn support(&self) -> (Vec<f64>, f64) {
        let (c, r) = self.inner.support();
        (c.iter().map(|v| v * self.lambda).collect(), r * self.lambda)
    }
}

/// `D_λ^{(α)} f`. Fails with [`ScalingError::SupportEscape`] when the
/// dilated support ball is not inside the chart.
pub fn dilate_section<'a>(model: &'a SpacetimeModel, probe: &'a ScalingProbe, lambda: f64, f: &'a dyn Section) -> Result<Dilated<'a>, ScalingError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ScalingError::InvalidInput(format!("λ = {lambda} outside (0, 1]")));
    }
    let d = Dilated { model, probe, lambda, inner: f };
    let (c, r) = d.support();
    for axis in 0..c.len() {
        for sign in [-1.0, 1.0] {
            let mut z = c.clone();
            z[axis] += sign * r;
            match probe.from_normal(model, &z) {
                Ok(_) => {}
                Err(GeometryError::OutOfChart(_)) => return Err(ScalingError::SupportEscape { lambda }),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(d)
}
