//! Command dispatch for the `parametrix` binary: every command reads a
//! [`RunConfig`], writes JSON (and CSV for scaling tables) into the output
//! directory and maps failures to exit codes.
//!
//! | exit | meaning |
//! |------|---------|
//! | 0 | success, every enabled verification suite passed |
//! | 1 | a verification suite failed or a computation did not converge |
//! | 2 | malformed configuration or invalid physical input |

pub mod config;

pub use config::{BundleBlock, RunConfig};

use crate::geometry::{CotangentPoint, GeometryError, SpacetimeModel};
use crate::hadamard::{
    commutator_identity_check, kernel_constants, transport_coefficients, CoefficientEvaluator, FlatKleinGordon, Gaussian, HadamardError,
    RegularizedKernel, TransportEvaluator, TransportOptions,
};
use crate::microlocal::{
    band_limited_kernel_3d, msc_verdict, predicted_r, pst_closure, set_distance, wf_translation_invariant, DirectionGrid, MicrolocalError,
    PredictedSetR, WavefrontEstimate,
};
use crate::numerics::C64;
use crate::scaling::{scaling_limit_pairing, LimitOptions, MomentumPairing, ScalingError, ScalingProbe, ScalingReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("computation failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Input(_) => 2,
        }
    }
}

impl From<MicrolocalError> for CliError {
    fn from(e: MicrolocalError) -> Self {
        match e {
            MicrolocalError::NonNullSeed { .. }
            | MicrolocalError::NonNullInput { .. }
            | MicrolocalError::InvalidInput(_)
            | MicrolocalError::WindowClipped { .. }
            | MicrolocalError::GridTooCoarse(_) => CliError::Input(format!("{e:?}: {e}")),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<HadamardError> for CliError {
    fn from(e: HadamardError) -> Self {
        match e {
            HadamardError::InvalidInput(_) | HadamardError::BadParity { .. } => CliError::Input(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ScalingError> for CliError {
    fn from(e: ScalingError) -> Self {
        match e {
            ScalingError::InvalidInput(_) | ScalingError::SupportEscape { .. } => CliError::Input(e.to_string()),
            ScalingError::Hadamard(h) => h.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::OutOfChart(_) | GeometryError::InvalidModel(_) | GeometryError::ZeroCovector | GeometryError::NonNullInput => {
                CliError::Input(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

/// Commands of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Coeffs,
    Kernel,
    Wavefront,
    PredictR,
    Scaling,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Kernel => "kernel",
            Command::Wavefront => "wavefront",
            Command::PredictR => "predict-r",
            Command::Scaling => "scaling",
            Command::Verify => "verify",
        }
    }
}

/// Result of one command: the JSON document, optional CSV, and whether
/// every check it ran passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: Value,
    pub csv: Option<String>,
    pub pass: bool,
}

fn required<'a, T>(block: &'a Option<T>, name: &str, cmd: &str) -> Result<&'a T, CliError> {
    block.as_ref().ok_or_else(|| CliError::Config(format!("{name}: block required by command `{cmd}`")))
}

fn complex(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Table of `U_0..U_K` along seeded rays from `coeffs.base`.
pub fn cmd_coeffs(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let task = required(&cfg.coeffs, "coeffs", "coeffs")?;
    let model = cfg.model()?;
    let op = cfg.wave_operator(&model)?;
    let m = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rays: Vec<Vec<f64>> = (0..task.rays).map(|_| random_unit(m, &mut rng).iter().map(|v| v * task.ray_length).collect()).collect();
    let t: Vec<f64> = (1..=task.samples).map(|i| i as f64 / task.samples as f64).collect();
    let order = cfg.series.order;
    let table = transport_coefficients(&op, &task.base, &rays, &t, order, &TransportOptions::default())?;
    let mut max_u0 = 0.0f64;
    let mut max_uk = vec![0.0f64; order];
    for ray in &table.rays {
        for (k, uk) in ray.u.iter().enumerate() {
            for mat in uk {
                if k == 0 {
                    let id = crate::bundle::FibreMatrix::identity(table.rank, table.rank);
                    max_u0 = max_u0.max((mat - id).iter().map(|z| z.norm()).fold(0.0, f64::max));
                } else {
                    max_uk[k - 1] = max_uk[k - 1].max(mat.iter().map(|z| z.norm()).fold(0.0, f64::max));
                }
            }
        }
    }
    let rays_json: Vec<Value> = table
        .rays
        .iter()
        .map(|r| {
            json!({
                "w": r.w,
                "t": r.t,
                "points": r.points,
                "sqrt_van_vleck": r.sqrt_van_vleck,
                "u": r.u.iter().map(|uk| uk.iter().map(|mat| mat.transpose().iter().map(|z| complex(*z)).collect::<Vec<_>>()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let pass = table.is_finite();
    Ok(Outcome {
        json: json!({
            "command": "coeffs",
            "seed": cfg.seed,
            "base": table.base,
            "order": order,
            "rank": table.rank,
            "summary": { "max_abs_u0_minus_identity": max_u0, "max_abs_uk": max_uk, "finite": pass },
            "rays": rays_json,
        }),
        csv: None,
        pass,
    })
}

fn coefficient_evaluator(cfg: &RunConfig, model: &SpacetimeModel) -> Result<Box<dyn CoefficientEvaluator>, CliError> {
    if let (true, BundleBlock::KleinGordon { mass }) = (model.is_flat_minkowski(), &cfg.bundle) {
        return Ok(Box::new(FlatKleinGordon { mass: *mass }));
    }
    Ok(Box::new(TransportEvaluator::new(Arc::new(cfg.wave_operator(model)?))))
}

/// Regularized kernel `G_ε(x, base)` for `x` on an `(x⁰, x¹)` slice grid.
pub fn cmd_kernel(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let task = required(&cfg.kernel, "kernel", "kernel")?;
    let model = cfg.model()?;
    let spec = cfg.series_spec();
    let coeffs = coefficient_evaluator(cfg, &model)?;
    let (ta, sa) = (model.time_axis(), if model.time_axis() == 0 { 1 } else { 0 });
    let half = (task.points - 1) as f64 / 2.0;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..task.points)
        .flat_map(|i| (0..task.points).map(move |j| (i, j)))
        .map(|(i, j)| {
            let mut x = task.base.clone();
            x[ta] += (i as f64 - half) * task.spacing;
            x[sa] += (j as f64 - half) * task.spacing;
            (x, task.base.clone())
        })
        .collect();
    if let Some((x, _)) = pairs.iter().find(|(x, _)| !model.chart().contains(x)) {
        return Err(GeometryError::OutOfChart(x.clone()).into());
    }
    let kernel = RegularizedKernel::sample(&model, &spec, coeffs.as_ref(), &pairs)?;
    let pass = kernel.all_finite();
    Ok(Outcome {
        json: json!({ "command": "kernel", "seed": cfg.seed, "summary": { "pairs": pairs.len(), "finite": pass }, "kernel": kernel }),
        csv: None,
        pass,
    })
}

/// The flat three-dimensional kernel in the difference variable and its
/// estimated wavefront cone.
pub fn estimate_kernel_cone(cfg: &RunConfig) -> Result<WavefrontEstimate, CliError> {
    let task = required(&cfg.wavefront, "wavefront", "wavefront")?;
    let model = cfg.model()?;
    let mass = match cfg.bundle {
        BundleBlock::KleinGordon { mass } => mass,
        _ => return Err(CliError::Input("kernel wavefront estimation runs the scalar (klein-gordon) bundle".into())),
    };
    if !model.is_flat_minkowski() || model.dim() != 3 || model.time_axis() != 0 {
        return Err(CliError::Input(
            "two-point wavefront estimation uses the translation-invariant reduction: flat m = 3, time axis 0".into(),
        ));
    }
    let h = task.spacing;
    let kernel = band_limited_kernel_3d(kernel_constants(3).beta1, mass, task.eps_cells * h, h, task.grid)?;
    let dirs = DirectionGrid::fibonacci(3, task.directions);
    Ok(wf_translation_invariant(&kernel, &dirs, &task.estimator)?)
}

fn estimate_json(est: &WavefrontEstimate) -> Value {
    let flagged: Vec<Value> = est
        .flagged()
        .map(|s| json!({ "direction": s.direction, "exponent": s.exponent, "confidence": s.confidence, "marginal": s.marginal }))
        .collect();
    json!({
        "n_directions": est.n_directions,
        "cell_angle_deg": est.cell_angle.to_degrees(),
        "decay_threshold": est.decay_threshold,
        "window_scale": est.window_scale,
        "n_flagged": flagged.len(),
        "n_confident": est.confident().count(),
        "flagged": flagged,
    })
}

pub fn cmd_wavefront(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let est = estimate_kernel_cone(cfg)?;
    Ok(Outcome { json: json!({ "command": "wavefront", "seed": cfg.seed, "estimate": estimate_json(&est) }), csv: None, pass: true })
}

/// Past-directed null covector at `q` with the given spatial components.
fn past_null(model: &SpacetimeModel, q: &[f64], spatial: &[f64]) -> Vec<f64> {
    let m = model.dim();
    let ta = model.time_axis();
    let unit = |i: usize| -> Vec<f64> { (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect() };
    let mut xi = vec![0.0; m];
    for (k, i) in (0..m).filter(|&i| i != ta).enumerate() {
        xi[i] = spatial[k];
    }
    // g^{tt} a² + 2 c a + b = 0 with the raised time component g^{tt} a + c < 0
    let gtt = model.raise(q, &unit(ta))[ta];
    let up = model.raise(q, &xi);
    let c = up[ta];
    let b: f64 = up.iter().zip(&xi).map(|(u, x)| u * x).sum();
    xi[ta] = (-c - (c * c - gtt * b).max(0.0).sqrt()) / gtt;
    xi
}

fn seeds(cfg: &RunConfig, model: &SpacetimeModel) -> Result<Vec<CotangentPoint>, CliError> {
    let task = required(&cfg.predict_r, "predict_r", "predict-r")?;
    let m = model.dim();
    let mut out: Vec<CotangentPoint> = task.seeds.iter().map(|s| CotangentPoint { q: s[..m].to_vec(), xi: s[m..].to_vec() }).collect();
    if let Some(n) = task.ring {
        let base = task.ring_base.clone().unwrap_or_else(|| model.chart().center());
        let spatial: Vec<Vec<f64>> = if m == 3 {
            (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin_cos()).map(|(s, c)| vec![c, s]).collect()
        } else {
            DirectionGrid::fibonacci(m - 1, n).dirs
        };
        out.extend(spatial.iter().map(|sp| CotangentPoint { q: base.clone(), xi: past_null(model, &base, sp) }));
    }
    Ok(out)
}

pub fn predicted_set(cfg: &RunConfig) -> Result<PredictedSetR, CliError> {
    let task = required(&cfg.predict_r, "predict_r", "predict-r")?;
    let model = cfg.model()?;
    let seeds = seeds(cfg, &model)?;
    Ok(predicted_r(&model, &seeds, (task.t_span[0], task.t_span[1]), task.samples)?)
}

pub fn cmd_predict_r(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = predicted_set(cfg)?;
    Ok(Outcome {
        json: json!({
            "command": "predict-r",
            "seed": cfg.seed,
            "summary": { "seeds": r.seeds.len(), "samples": r.samples.len(), "coparallel_residual": r.coparallel_residual },
            "predicted": r,
        }),
        csv: None,
        pass: true,
    })
}

/// Scaled pairings of the conformal vacuum of a conformally flat chart
/// (Minkowski included) against the flat massless reference.
pub fn scaling_report(cfg: &RunConfig) -> Result<ScalingReport, CliError> {
    let task = required(&cfg.scaling, "scaling", "scaling")?;
    let model = cfg.model()?;
    if !matches!(cfg.bundle, BundleBlock::KleinGordon { .. }) {
        return Err(CliError::Input("the scaling command runs the scalar (klein-gordon) bundle".into()));
    }
    let m = model.dim();
    let probe = ScalingProbe::new(&model, &task.center, m as f64 / 2.0 + 1.0, task.lambdas.clone())?;
    let f = Gaussian::isotropic(&vec![0.0; m], task.sigma, 1.0);
    let f2 = Gaussian::isotropic(&task.offset, task.sigma, 1.0);
    let opts = LimitOptions { quad_rel_tol: task.quad_rel_tol, ..LimitOptions::default() };
    Ok(scaling_limit_pairing(&MomentumPairing::conformal_scalar(model), &probe, &f, &f2, &opts)?)
}

/// Scaling verdict: quadrature within tolerance, gaps non-increasing and the
/// last gap within five tolerances.
pub fn scaling_pass(r: &ScalingReport) -> bool {
    let last = *r.gaps.last().expect("non-empty sequence");
    r.within_tolerance && r.gaps.windows(2).all(|w| w[1] <= w[0] + r.quad_tolerance) && last <= 5.0 * r.quad_tolerance
}

pub fn cmd_scaling(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = scaling_report(cfg)?;
    let pass = scaling_pass(&r);
    Ok(Outcome { json: json!({ "command": "scaling", "seed": cfg.seed, "pass": pass, "report": r }), csv: Some(r.to_csv()), pass })
}

fn suite_msc(cfg: &RunConfig) -> Result<(bool, Value), CliError> {
    let v = required(&cfg.verify, "verify", "verify")?;
    let est = estimate_kernel_cone(cfg)?;
    let pred = predicted_set(cfg)?;
    let report = msc_verdict(&est, &pred, v.angular_tol_deg.to_radians(), v.threshold)?;
    Ok((report.pass, json!({ "verdict": report, "estimate": estimate_json(&est) })))
}

fn suite_closure(cfg: &RunConfig) -> Result<(bool, Value), CliError> {
    let v = required(&cfg.verify, "verify", "verify")?;
    let task = required(&cfg.predict_r, "predict_r", "verify")?;
    let model = cfg.model()?;
    let pred = predicted_set(cfg)?;
    let window = (task.closure_window[0], task.closure_window[1]);
    let once = pst_closure(&pred.samples, &model, window, task.closure_step)?;
    let twice = pst_closure(&once, &model, window, task.closure_step)?;
    let d = set_distance(&once, &twice);
    Ok((d <= v.closure_tol, json!({ "closure_size": once.len(), "reclosure_size": twice.len(), "distance": d, "tolerance": v.closure_tol })))
}

fn suite_commutator(cfg: &RunConfig) -> Result<(bool, Value), CliError> {
    let v = required(&cfg.verify, "verify", "verify")?;
    let model = cfg.model()?;
    let mass = match cfg.bundle {
        BundleBlock::KleinGordon { mass } => mass,
        _ => return Err(CliError::Input("the commutator suite runs the scalar (klein-gordon) bundle".into())),
    };
    let spec = cfg.series_spec();
    let m = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut worst = 0.0f64;
    let mut rows = vec![];
    for _ in 0..v.commutator_pairs {
        let mut gauss = || {
            let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            Gaussian::isotropic(&c, rng.gen_range(0.15..0.3), 1.0)
        };
        let (f, f2) = (gauss(), gauss());
        let r = commutator_identity_check(&model, &spec, &FlatKleinGordon { mass }, &f, &f2)?;
        worst = worst.max(r.relative());
        rows.push(json!({ "f": f, "f2": f2, "residual": r.residual, "scale": r.scale }));
    }
    Ok((worst <= v.commutator_tol, json!({ "worst_relative": worst, "tolerance": v.commutator_tol, "pairs": rows })))
}

fn suite_scaling(cfg: &RunConfig) -> Result<(bool, Value), CliError> {
    let r = scaling_report(cfg)?;
    Ok((scaling_pass(&r), json!({ "gaps": r.gaps, "quad_tolerance": r.quad_tolerance, "within_tolerance": r.within_tolerance, "report": r })))
}

/// Runs the enabled suites; a suite that errors counts as failed and its
/// error is recorded.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let v = required(&cfg.verify, "verify", "verify")?;
    let mut suites = serde_json::Map::new();
    let mut failures = vec![];
    for name in &v.suites {
        let result = match name.as_str() {
            "msc" => suite_msc(cfg),
            "closure" => suite_closure(cfg),
            "commutator" => suite_commutator(cfg),
            "scaling" => suite_scaling(cfg),
            other => Err(CliError::Config(format!("verify.suites: unknown suite `{other}`"))),
        };
        match result {
            Ok((pass, detail)) => {
                if !pass {
                    failures.push(name.clone());
                }
                suites.insert(name.clone(), json!({ "pass": pass, "detail": detail }));
            }
            Err(e @ CliError::Config(_)) => return Err(e),
            Err(e) => {
                failures.push(name.clone());
                suites.insert(name.clone(), json!({ "pass": false, "error": e.to_string() }));
            }
        }
    }
    let pass = failures.is_empty();
    Ok(Outcome { json: json!({ "command": "verify", "seed": cfg.seed, "pass": pass, "failures": failures, "suites": suites }), csv: None, pass })
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Coeffs => cmd_coeffs(cfg),
        Command::Kernel => cmd_kernel(cfg),
        Command::Wavefront => cmd_wavefront(cfg),
        Command::PredictR => cmd_predict_r(cfg),
        Command::Scaling => cmd_scaling(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

/// Writes `<command>.json` (and `<command>.csv`) into `dir`.
pub fn write_outcome(dir: &Path, command: Command, outcome: &Outcome) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Failed(format!("writing to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(&outcome.json).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(dir.join(format!("{}.json", command.name())), text + "\n").map_err(io)?;
    if let Some(csv) = &outcome.csv {
        std::fs::write(dir.join(format!("{}.csv", command.name())), csv).map_err(io)?;
    }
    Ok(())
}
