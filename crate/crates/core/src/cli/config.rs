//! Run configuration: one TOML document with a spacetime, bundle, series and
//! output block plus one optional block per command.
//!
//! Physics parameters have no defaults; a missing key is a configuration
//! error naming the key.

use super::CliError;
use crate::bundle::{BundleModel, DiracModel, WaveOperator};
use crate::geometry::{shipped_metric, ChartBox, ShippedParams, SpacetimeModel};
use crate::hadamard::{ChiWindow, SeriesSpec, TimeFunction};
use crate::microlocal::EstimatorOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every random choice (probe rays, test-function placement).
    pub seed: u64,
    pub spacetime: SpacetimeBlock,
    pub bundle: BundleBlock,
    pub series: SeriesBlock,
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<CoeffsTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavefront: Option<WavefrontTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict_r: Option<PredictTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacetimeBlock {
    /// `minkowski`, `conformal` or `ultrastatic-bump`.
    pub metric: String,
    pub dim: usize,
    pub time_axis: usize,
    pub chart_lo: Vec<f64>,
    pub chart_hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BundleBlock {
    /// `□ + mass²` on the trivial line bundle.
    KleinGordon { mass: f64 },
    /// `□` on the trivial bundle of rank `rank`.
    Trivial { rank: usize },
    /// `D_▷D_◁` on the spinor bundle.
    Dirac { mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesBlock {
    /// Truncation order `n` of the series.
    pub n: usize,
    /// Highest transported coefficient `U_K`.
    pub order: usize,
    pub eps_schedule: Vec<f64>,
    pub time_function: TimeFunction,
    /// Fractions `[inner, outer]` of the χ cutoff; absent means `χ ≡ 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffsTask {
    pub base: Vec<f64>,
    /// Number of seeded random ray directions.
    pub rays: usize,
    /// Coordinate length of every ray.
    pub ray_length: f64,
    /// Samples per ray, equally spaced in the affine parameter.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTask {
    pub base: Vec<f64>,
    /// Points per axis of the `(x⁰, x¹)` slice of first arguments.
    pub points: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavefrontTask {
    /// Samples per axis of the band-limited difference-variable kernel.
    pub grid: usize,
    pub spacing: f64,
    /// Regulator ε in units of the grid spacing.
    pub eps_cells: f64,
    pub directions: usize,
    pub estimator: EstimatorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictTask {
    /// Explicit seeds `[q…, ξ…]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<Vec<f64>>,
    /// Number of past-null covectors spread evenly over the cone at `ring_base`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_base: Option<Vec<f64>>,
    pub t_span: [f64; 2],
    pub samples: usize,
    /// Time window and lattice step of the propagation closure.
    pub closure_window: [f64; 2],
    pub closure_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingTask {
    pub center: Vec<f64>,
    pub sigma: f64,
    /// Centre of the second test function in normal coordinates (the first
    /// sits at the origin).
    pub offset: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub quad_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyTask {
    /// Any of `msc`, `closure`, `commutator`, `scaling`.
    pub suites: Vec<String>,
    pub angular_tol_deg: f64,
    pub threshold: f64,
    pub closure_tol: f64,
    pub commutator_pairs: usize,
    pub commutator_tol: f64,
}

pub const SUITES: [&str; 4] = ["msc", "closure", "commutator", "scaling"];

fn bad(key: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {why}"))
}

fn check_point(key: &str, x: &[f64], cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.spacetime;
    if x.len() != s.dim {
        return Err(bad(key, format!("expected {} components", s.dim)));
    }
    if x.iter().zip(s.chart_lo.iter().zip(&s.chart_hi)).any(|(v, (a, b))| !(v >= a && v <= b)) {
        return Err(bad(key, "point lies outside the chart box"));
    }
    Ok(())
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, "must be positive and finite"))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.spacetime;
        if !(3..=4).contains(&s.dim) {
            return Err(bad("spacetime.dim", "must be 3 or 4"));
        }
        if s.time_axis >= s.dim {
            return Err(bad("spacetime.time_axis", "must be below dim"));
        }
        if s.chart_lo.len() != s.dim || s.chart_hi.len() != s.dim {
            return Err(bad("spacetime.chart_lo", "chart corners need dim components"));
        }
        if s.chart_lo.iter().zip(&s.chart_hi).any(|(a, b)| !(a < b)) {
            return Err(bad("spacetime.chart_hi", "must exceed chart_lo on every axis"));
        }
        match s.metric.as_str() {
            "minkowski" => {}
            "conformal" => {
                s.conformal_c.ok_or_else(|| bad("spacetime.conformal_c", "required for metric `conformal`"))?;
            }
            "ultrastatic-bump" => {
                s.bump_amplitude.ok_or_else(|| bad("spacetime.bump_amplitude", "required for metric `ultrastatic-bump`"))?;
                positive("spacetime.bump_width", s.bump_width.ok_or_else(|| bad("spacetime.bump_width", "required for metric `ultrastatic-bump`"))?)?;
                if s.bump_center.as_ref().is_some_and(|c| c.len() + 1 != s.dim) {
                    return Err(bad("spacetime.bump_center", "needs dim − 1 components"));
                }
            }
            other => return Err(bad("spacetime.metric", format!("unknown metric `{other}`"))),
        }
        match &self.bundle {
            BundleBlock::KleinGordon { mass } | BundleBlock::Dirac { mass } if !(*mass >= 0.0 && mass.is_finite()) => {
                return Err(bad("bundle.mass", "must be non-negative"));
            }
            BundleBlock::Trivial { rank } if *rank == 0 => return Err(bad("bundle.rank", "must be at least 1")),
            BundleBlock::Dirac { .. } if s.time_axis != 0 => return Err(bad("spacetime.time_axis", "the Dirac bundle expects time axis 0")),
            _ => {}
        }
        let se = &self.series;
        if se.eps_schedule.len() < 2 || se.eps_schedule.iter().any(|e| !(*e > 0.0)) || se.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("series.eps_schedule", "needs at least two positive, strictly decreasing values"));
        }
        if let Some([inner, outer]) = se.chi {
            if !(0.0 < inner && inner < outer && outer <= 1.0) {
                return Err(bad("series.chi", "fractions must satisfy 0 < inner < outer ≤ 1"));
            }
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir", "must not be empty"));
        }
        if let Some(c) = &self.coeffs {
            check_point("coeffs.base", &c.base, self)?;
            positive("coeffs.ray_length", c.ray_length)?;
            if c.rays == 0 || c.samples == 0 {
                return Err(bad("coeffs.rays", "rays and samples must be at least 1"));
            }
        }
        if let Some(k) = &self.kernel {
            check_point("kernel.base", &k.base, self)?;
            positive("kernel.spacing", k.spacing)?;
            if k.points < 2 {
                return Err(bad("kernel.points", "must be at least 2"));
            }
        }
        if let Some(w) = &self.wavefront {
            positive("wavefront.spacing", w.spacing)?;
            positive("wavefront.eps_cells", w.eps_cells)?;
            if w.grid < 32 || !w.grid.is_power_of_two() {
                return Err(bad("wavefront.grid", "must be a power of two ≥ 32"));
            }
            if w.directions < 8 {
                return Err(bad("wavefront.directions", "must be at least 8"));
            }
            positive("wavefront.estimator.decay_threshold", w.estimator.decay_threshold)?;
        }
        if let Some(p) = &self.predict_r {
            if p.seeds.is_empty() && p.ring.is_none() {
                return Err(bad("predict_r.seeds", "give explicit seeds or a ring count"));
            }
            for (i, sd) in p.seeds.iter().enumerate() {
                if sd.len() != 2 * s.dim {
                    return Err(bad(&format!("predict_r.seeds[{i}]"), format!("expected {} numbers [q…, ξ…]", 2 * s.dim)));
                }
                check_point(&format!("predict_r.seeds[{i}]"), &sd[..s.dim], self)?;
            }
            if let Some(b) = &p.ring_base {
                check_point("predict_r.ring_base", b, self)?;
            }
            if !(p.t_span[0] <= p.t_span[1]) || p.samples == 0 {
                return Err(bad("predict_r.t_span", "needs an ordered span and at least one sample"));
            }
            if !(p.closure_window[0] <= p.closure_window[1]) {
                return Err(bad("predict_r.closure_window", "must be ordered"));
            }
            positive("predict_r.closure_step", p.closure_step)?;
        }
        if let Some(sc) = &self.scaling {
            check_point("scaling.center", &sc.center, self)?;
            positive("scaling.sigma", sc.sigma)?;
            positive("scaling.quad_rel_tol", sc.quad_rel_tol)?;
            if sc.offset.len() != s.dim {
                return Err(bad("scaling.offset", format!("expected {} components", s.dim)));
            }
            if sc.lambdas.is_empty() || sc.lambdas.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) || sc.lambdas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad("scaling.lambdas", "must be strictly decreasing in (0, 1]"));
            }
        }
        if let Some(v) = &self.verify {
            for (i, name) in v.suites.iter().enumerate() {
                if !SUITES.contains(&name.as_str()) {
                    return Err(bad(&format!("verify.suites[{i}]"), format!("unknown suite `{name}`")));
                }
                let needs: &[(&str, bool)] = match name.as_str() {
                    "msc" => &[("wavefront", self.wavefront.is_some()), ("predict_r", self.predict_r.is_some())],
                    "closure" => &[("predict_r", self.predict_r.is_some())],
                    "scaling" => &[("scaling", self.scaling.is_some())],
                    _ => &[],
                };
                if let Some((block, _)) = needs.iter().find(|(_, present)| !present) {
                    return Err(bad(block, format!("block required by verify suite `{name}`")));
                }
            }
            positive("verify.angular_tol_deg", v.angular_tol_deg)?;
            positive("verify.closure_tol", v.closure_tol)?;
            positive("verify.commutator_tol", v.commutator_tol)?;
            if !(0.0..=1.0).contains(&v.threshold) {
                return Err(bad("verify.threshold", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SpacetimeModel, CliError> {
        let s = &self.spacetime;
        let params = ShippedParams {
            conformal_c: s.conformal_c.unwrap_or_default(),
            bump_amplitude: s.bump_amplitude.unwrap_or_default(),
            bump_width: s.bump_width.unwrap_or(1.0),
            bump_center: s.bump_center.clone(),
        };
        let field = shipped_metric(&s.metric, s.dim, &params).map_err(|e| bad("spacetime.metric", e))?;
        SpacetimeModel::new(field, ChartBox { lo: s.chart_lo.clone(), hi: s.chart_hi.clone() }, s.time_axis).map_err(|e| bad("spacetime", e))
    }

    pub fn series_spec(&self) -> SeriesSpec {
        let s = &self.spacetime;
        let chart = ChartBox { lo: s.chart_lo.clone(), hi: s.chart_hi.clone() };
        SeriesSpec {
            m: s.dim,
            n: self.series.n,
            eps_schedule: self.series.eps_schedule.clone(),
            t_func: self.series.time_function.clone(),
            chi: self.series.chi.map(|[i, o]| ChiWindow::with_fractions(&chart, i, o)),
        }
    }

    pub fn wave_operator(&self, model: &SpacetimeModel) -> Result<WaveOperator, CliError> {
        let m = model.dim();
        Ok(match &self.bundle {
            BundleBlock::KleinGordon { mass } => WaveOperator::new(model.clone(), BundleModel::klein_gordon(m, *mass)),
            BundleBlock::Trivial { rank } => WaveOperator::new(model.clone(), BundleModel::trivial(m, *rank)),
            BundleBlock::Dirac { mass } => DiracModel::new(model.clone(), *mass).map_err(|e| bad("bundle", e))?.squared_wave_operator(),
        })
    }
}
