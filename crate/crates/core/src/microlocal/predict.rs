//! The set `R` of pairs joined by a null bicharacteristic, its closure under
//! the flow, and the comparison of an estimate against it.

use super::directions::{angle, normalized};
use super::estimator::WavefrontEstimate;
use super::MicrolocalError;
use crate::geometry::{CotangentPoint, GeometryError, NullClass, SpacetimeModel};
use crate::numerics::ode::{self, OdeOptions};
use crate::numerics::MAX_DIM;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

const FLOW_TOL: f64 = 1e-11;
const CLASS_TOL: f64 = 1e-6;

/// `(q, ξ; q′, ξ′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSample {
    pub q: Vec<f64>,
    pub xi: Vec<f64>,
    pub q2: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl RSample {
    /// `(q′, −ξ′; q, −ξ)`.
    pub fn swapped(&self) -> Self {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect();
        Self { q: self.q2.clone(), xi: neg(&self.xi2), q2: self.q.clone(), xi2: neg(&self.xi) }
    }

    fn key(&self) -> Vec<i64> {
        let quant = |v: &[f64]| v.iter().map(|x| (x * 1e7).round() as i64).collect::<Vec<_>>();
        let (a, b) = (normalized(&self.xi), normalized(&self.xi2));
        [quant(&self.q), quant(&a), quant(&self.q2), quant(&b)].concat()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSetR {
    pub samples: Vec<RSample>,
    pub seeds: Vec<CotangentPoint>,
    /// Largest `|ξ_μ − g_{μν}γ̇^ν| / |ξ|` met along the flows.
    pub coparallel_residual: f64,
}

impl PredictedSetR {
    /// First-slot directions, Euclidean-normalized: the difference-variable
    /// cone of a translation-invariant kernel.
    pub fn diagonal_directions(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| normalized(&s.xi)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Strip state `[x, u, ξ]`: geodesic with `ξ` parallel-transported. With
/// `by_time` the parameter is the time coordinate instead of the affine one.
fn strip_rhs(model: &SpacetimeModel, y: &[f64], dy: &mut [f64], by_time: bool) {
    let m = model.dim();
    let (x, rest) = y.split_at(m);
    let (u, xi) = rest.split_at(m);
    let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
    model.christoffel_into(x, &mut gam);
    dy[..m].copy_from_slice(u);
    model.geodesic_accel(x, u, &mut dy[m..2 * m]);
    for mu in 0..m {
        let mut acc = 0.0;
        for l in 0..m {
            for nu in 0..m {
                acc += gam[l * m * m + mu * m + nu] * u[nu] * xi[l];
            }
        }
        dy[2 * m + mu] = acc;
    }
    if by_time {
        let ut = u[model.time_axis()];
        dy[..3 * m].iter_mut().for_each(|v| *v /= ut);
    }
}

/// States of the strip through `(q, ξ)` at the parameter values `params`
/// (any order, may include 0). Points outside the chart are dropped.
fn flow_strip(model: &SpacetimeModel, q: &[f64], xi: &[f64], t0: f64, params: &[f64], by_time: bool) -> Result<Vec<(f64, Vec<f64>)>, MicrolocalError> {
    let m = model.dim();
    let u0 = model.raise(q, xi);
    let y0: Vec<f64> = q.iter().chain(&u0).chain(xi).copied().collect();
    let opts = OdeOptions::with_tol(FLOW_TOL);
    let chart = model.chart();
    let mut fwd: Vec<f64> = params.iter().copied().filter(|t| *t >= t0).collect();
    let mut bwd: Vec<f64> = params.iter().copied().filter(|t| *t < t0).collect();
    fwd.sort_by(f64::total_cmp);
    bwd.sort_by(|a, b| b.total_cmp(a));
    let mut out = Vec::new();
    for side in [bwd, fwd] {
        let run = ode::integrate(|_, y, d| strip_rhs(model, y, d, by_time), t0, &y0, &side, &opts, |_, y| !chart.contains(&y[..m]))
            .map_err(|e| GeometryError::StepFailure(e.to_string()))?;
        for (t, y) in run.t.into_iter().zip(run.y) {
            if chart.contains(&y[..m]) && side.iter().any(|s| *s == t) {
                out.push((t, y));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn coparallel(model: &SpacetimeModel, y: &[f64]) -> f64 {
    let m = model.dim();
    let lowered = model.lower(&y[..m], &y[m..2 * m]);
    let xi = &y[2 * m..];
    let diff: Vec<f64> = lowered.iter().zip(xi).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(xi)
}

/// Flows each past-null seed `(q, ξ)` along its bicharacteristic for affine
/// parameters in `t_span` (`n_samples` equally spaced values) and emits
/// `(q, ξ; γ(λ), −ξ(λ))`.
pub fn predicted_r(geom: &SpacetimeModel, seeds: &[CotangentPoint], t_span: (f64, f64), n_samples: usize) -> Result<PredictedSetR, MicrolocalError> {
    if n_samples < 1 || t_span.0 > t_span.1 {
        return Err(MicrolocalError::InvalidInput("need n_samples ≥ 1 and an ordered t_span".into()));
    }
    let params: Vec<f64> = if n_samples == 1 {
        vec![t_span.0]
    } else {
        (0..n_samples).map(|i| t_span.0 + (t_span.1 - t_span.0) * i as f64 / (n_samples - 1) as f64).collect()
    };
    let m = geom.dim();
    let mut samples = Vec::new();
    let mut residual = 0.0f64;
    for (index, seed) in seeds.iter().enumerate() {
        match geom.null_classify(&seed.q, &seed.xi, CLASS_TOL) {
            Ok(NullClass::PastNull) => {}
            Ok(_) | Err(GeometryError::ZeroCovector) => return Err(MicrolocalError::NonNullSeed { index }),
            Err(e) => return Err(e.into()),
        }
        for (_, y) in flow_strip(geom, &seed.q, &seed.xi, 0.0, &params, false)? {
            residual = residual.max(coparallel(geom, &y));
            let s = RSample { q: seed.q.clone(), xi: seed.xi.clone(), q2: y[..m].to_vec(), xi2: y[2 * m..].iter().map(|v| -v).collect() };
            if geom.null_classify(&s.q2, &s.xi2, CLASS_TOL)? != NullClass::FutureNull {
                return Err(GeometryError::NonNullInput.into());
            }
            samples.push(s);
        }
    }
    Ok(PredictedSetR { samples, seeds: seeds.to_vec(), coparallel_residual: residual })
}

/// Orbit of `(q, ξ)` sampled where the time coordinate lies on the lattice
/// `k·step` inside `window`; covectors scaled to unit time component.
fn orbit(geom: &SpacetimeModel, q: &[f64], xi: &[f64], window: (f64, f64), step: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>, MicrolocalError> {
    let m = geom.dim();
    let ta = geom.time_axis();
    let lattice: Vec<f64> = ((window.0 / step).ceil() as i64..=(window.1 / step).floor() as i64).map(|k| k as f64 * step).collect();
    Ok(flow_strip(geom, q, xi, q[ta], &lattice, true)?
        .into_iter()
        .map(|(t, y)| {
            let mut x = y[..m].to_vec();
            x[ta] = t;
            let c = y[2 * m + ta].abs();
            (x, y[2 * m..].iter().map(|v| v / c).collect())
        })
        .collect())
}

/// Replaces each pair by the product of the bicharacteristic orbits through
/// its two slots, sampled on the time lattice `k·step` within `window`.
/// Output is deduplicated and sorted, so closing twice reproduces the once-
/// closed set up to flow tolerance.
pub fn pst_closure(samples: &[RSample], geom: &SpacetimeModel, window: (f64, f64), step: f64) -> Result<Vec<RSample>, MicrolocalError> {
    type Orbit = std::rc::Rc<Vec<(Vec<f64>, Vec<f64>)>>;
    let mut out: BTreeMap<Vec<i64>, RSample> = BTreeMap::new();
    // pairs of a closed set share slots, so orbits repeat bit for bit
    let mut orbits: HashMap<Vec<u64>, Orbit> = HashMap::new();
    let cached = |orbits: &mut HashMap<Vec<u64>, Orbit>, geom: &SpacetimeModel, q: &[f64], xi: &[f64]| -> Result<Orbit, MicrolocalError> {
        let key: Vec<u64> = q.iter().chain(xi).map(|v| v.to_bits()).collect();
        if let Some(o) = orbits.get(&key) {
            return Ok(o.clone());
        }
        let o = Orbit::new(orbit(geom, q, xi, window, step)?);
        orbits.insert(key, o.clone());
        Ok(o)
    };
    for (index, s) in samples.iter().enumerate() {
        for (q, xi) in [(&s.q, &s.xi), (&s.q2, &s.xi2)] {
            match geom.null_classify(q, xi, CLASS_TOL) {
                Ok(NullClass::NonNull) | Err(GeometryError::ZeroCovector) => return Err(MicrolocalError::NonNullInput { index }),
                Ok(_) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let a = cached(&mut orbits, geom, &s.q, &s.xi)?;
        let b = cached(&mut orbits, geom, &s.q2, &s.xi2)?;
        for (q, xi) in a.iter() {
            for (q2, xi2) in b.iter() {
                let r = RSample { q: q.clone(), xi: xi.clone(), q2: q2.clone(), xi2: xi2.clone() };
                out.entry(r.key()).or_insert(r);
            }
        }
    }
    Ok(out.into_values().collect())
}

/// Largest distance from a sample of `a` to the nearest sample of `b`, in
/// the Euclidean metric on `(q, ξ̂, q′, ξ̂′)` with normalized covectors.
pub fn set_distance(a: &[RSample], b: &[RSample]) -> f64 {
    let flat = |s: &RSample| [s.q.clone(), normalized(&s.xi), s.q2.clone(), normalized(&s.xi2)].concat();
    let bs: Vec<Vec<f64>> = b.iter().map(flat).collect();
    let by_key: HashMap<Vec<i64>, usize> = b.iter().enumerate().map(|(i, s)| (s.key(), i)).collect();
    let dist = |v: &[f64], w: &[f64]| w.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for s in a {
        let v = flat(s);
        // a same-key neighbour bounds the nearest distance; skip the scan
        // when that bound cannot raise the maximum
        if by_key.get(&s.key()).is_some_and(|&i| dist(&v, &bs[i]) <= worst) {
            continue;
        }
        worst = worst.max(bs.iter().map(|w| dist(&v, w)).fold(f64::INFINITY, f64::min));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscReport {
    pub completeness: f64,
    pub soundness: f64,
    pub threshold: f64,
    pub angular_tol: f64,
    pub pass: bool,
    pub n_predicted: usize,
    pub n_flagged: usize,
    pub n_scored: usize,
    /// Predicted directions with no flagged estimate nearby.
    pub unmatched_predicted: Vec<usize>,
    /// Scored estimate samples far from every predicted direction.
    pub unsupported_flagged: Vec<usize>,
}

/// Compares the flagged cone of a translation-invariant estimate with the
/// diagonal reduction of `predicted`. Completeness counts every flagged
/// sample; soundness skips marginal ones.
pub fn msc_verdict(estimate: &WavefrontEstimate, predicted: &PredictedSetR, angular_tol: f64, threshold: f64) -> Result<MscReport, MicrolocalError> {
    let pred = predicted.diagonal_directions();
    if pred.is_empty() {
        return Err(MicrolocalError::EmptyPrediction);
    }
    let flagged: Vec<(usize, &super::WfSample)> = estimate.samples.iter().enumerate().filter(|(_, s)| s.flagged(estimate.decay_threshold)).collect();
    let near = |v: &[f64], set: &[Vec<f64>]| set.iter().any(|w| angle(v, w) <= angular_tol);
    let flagged_dirs: Vec<Vec<f64>> = flagged.iter().map(|(_, s)| s.direction.clone()).collect();
    let unmatched_predicted: Vec<usize> = pred.iter().enumerate().filter(|(_, p)| !near(p, &flagged_dirs)).map(|(i, _)| i).collect();
    let scored: Vec<&(usize, &super::WfSample)> = flagged.iter().filter(|(_, s)| !s.marginal).collect();
    let unsupported_flagged: Vec<usize> =
        scored.iter().filter(|(_, s)| !near(&s.direction, &pred)).map(|(i, _)| *i).collect();
    let completeness = 1.0 - unmatched_predicted.len() as f64 / pred.len() as f64;
    let soundness = if scored.is_empty() { 1.0 } else { 1.0 - unsupported_flagged.len() as f64 / scored.len() as f64 };
    Ok(MscReport {
        completeness,
        soundness,
        threshold,
        angular_tol,
        pass: completeness >= threshold && soundness >= threshold,
        n_predicted: pred.len(),
        n_flagged: flagged.len(),
        n_scored: scored.len(),
        unmatched_predicted,
        unsupported_flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shipped_metric, ChartBox, ShippedParams};
    use crate::microlocal::WfSample;

    fn bump() -> SpacetimeModel {
        let f = shipped_metric("ultrastatic-bump", 3, &ShippedParams::default()).unwrap();
        SpacetimeModel::new(f, ChartBox::cube(3, 2.0), 0).unwrap()
    }

    #[test]
    fn flat_seed_gives_straight_ray() {
        let g = SpacetimeModel::minkowski(4, 3.0);
        let xi = vec![-1.0, 1.0, 0.0, 0.0];
        let r = predicted_r(&g, &[CotangentPoint { q: vec![0.0; 4], xi: xi.clone() }], (0.0, 1.0), 5).unwrap();
        assert_eq!(r.samples.len(), 5);
        for (i, s) in r.samples.iter().enumerate() {
            let t = 0.25 * i as f64;
            // velocity η^{-1}ξ = (−1, −1, 0, 0)
            let expect = [-t, -t, 0.0, 0.0];
            assert!(s.q2.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!(s.xi2.iter().zip(&xi).all(|(a, b)| (a + b).abs() < 1e-12));
        }
        assert!(r.coparallel_residual < 1e-12);
    }

    #[test]
    fn non_null_or_future_seed_rejected() {
        let g = SpacetimeModel::minkowski(3, 3.0);
        let bad = |xi: Vec<f64>| predicted_r(&g, &[CotangentPoint { q: vec![0.0; 3], xi }], (0.0, 1.0), 3);
        assert!(matches!(bad(vec![0.0, 1.0, 0.0]), Err(MicrolocalError::NonNullSeed { index: 0 })));
        assert!(matches!(bad(vec![1.0, 1.0, 0.0]), Err(MicrolocalError::NonNullSeed { index: 0 })));
    }

    /// Past-null covector at `q` with the given spatial part.
    fn past_null(g: &SpacetimeModel, q: &[f64], spatial: &[f64]) -> CotangentPoint {
        let mut xs = vec![0.0];
        xs.extend_from_slice(spatial);
        let up = g.raise(q, &xs);
        let b: f64 = up.iter().zip(&xs).map(|(x, y)| x * y).sum();
        let g00 = g.raise(q, &[1.0, 0.0, 0.0])[0];
        xs[0] = -(-b / g00).sqrt();
        CotangentPoint { q: q.to_vec(), xi: xs }
    }

    #[test]
    fn swap_stays_in_the_set() {
        // the swap of (q,ξ; q′,ξ′) is the sample seeded at (q′, −ξ′) flowed back
        let g = bump();
        let seed = past_null(&g, &[0.0, 0.1, -0.2], &[0.6, 0.8]);
        let r = predicted_r(&g, &[seed], (0.0, 0.8), 3).unwrap();
        let s = r.samples.last().unwrap().swapped();
        assert_eq!(g.null_classify(&s.q, &s.xi, 1e-6).unwrap(), NullClass::PastNull);
        assert_eq!(g.null_classify(&s.q2, &s.xi2, 1e-6).unwrap(), NullClass::FutureNull);
        let back = predicted_r(&g, &[CotangentPoint { q: s.q.clone(), xi: s.xi.clone() }], (-0.8, 0.0), 2).unwrap();
        assert!(set_distance(&[s.clone()], &back.samples[..1]) < 1e-8);
    }

    #[test]
    fn curved_flow_stays_coparallel() {
        let g = bump();
        let seeds: Vec<CotangentPoint> = (0..6)
            .map(|k| {
                let a = k as f64;
                past_null(&g, &[0.0, 0.2 * a.cos(), 0.2 * a.sin()], &[a.cos(), a.sin()])
            })
            .collect();
        let r = predicted_r(&g, &seeds, (-1.0, 1.0), 9).unwrap();
        assert!(r.coparallel_residual <= 1e-7, "{}", r.coparallel_residual);
    }

    fn flat_pair() -> RSample {
        RSample { q: vec![0.0, 0.0, 0.0], xi: vec![-1.0, 1.0, 0.0], q2: vec![0.0, 0.3, 0.0], xi2: vec![1.0, 0.0, -1.0] }
    }

    #[test]
    fn flat_closure_is_product_of_straight_orbits() {
        let g = SpacetimeModel::minkowski(3, 2.0);
        let c = pst_closure(&[flat_pair()], &g, (-1.0, 1.0), 0.25).unwrap();
        assert_eq!(c.len(), 81);
        for s in &c {
            // first orbit: x = (t, t, 0), ξ ∝ (−1, 1, 0); second: x = (t, 0.3, t), ξ ∝ (1, 0, −1)
            let t = s.q[0];
            assert!((s.q[1] - t).abs() < 1e-12 && s.q[2].abs() < 1e-12);
            assert!((s.xi[0] + 1.0).abs() < 1e-12 && (s.xi[1] - 1.0).abs() < 1e-12);
            let t2 = s.q2[0];
            assert!((s.q2[1] - 0.3).abs() < 1e-12 && (s.q2[2] - t2).abs() < 1e-12);
        }
    }

    #[test]
    fn closure_is_idempotent() {
        let g = SpacetimeModel::minkowski(3, 2.0);
        let once = pst_closure(&[flat_pair()], &g, (-1.0, 1.0), 0.25).unwrap();
        let twice = pst_closure(&once, &g, (-1.0, 1.0), 0.25).unwrap();
        assert_eq!(once.len(), twice.len());
        assert!(set_distance(&twice, &once) < 1e-12);
        let gb = bump();
        let seed = past_null(&gb, &[0.0; 3], &[1.0, 0.0]);
        let pair = predicted_r(&gb, &[seed], (0.0, 0.5), 2).unwrap().samples[1].clone();
        let once = pst_closure(&[pair], &gb, (-1.0, 1.0), 0.25).unwrap();
        let twice = pst_closure(&once, &gb, (-1.0, 1.0), 0.25).unwrap();
        assert!(set_distance(&twice, &once) < 1e-7 && set_distance(&once, &twice) < 1e-7);
    }

    #[test]
    fn closure_rejects_non_null() {
        let g = SpacetimeModel::minkowski(3, 2.0);
        let mut p = flat_pair();
        p.xi2 = vec![1.0, 0.0, 0.0];
        assert!(matches!(pst_closure(&[p], &g, (-1.0, 1.0), 0.5), Err(MicrolocalError::NonNullInput { index: 0 })));
    }

    fn estimate_of(dirs: &[Vec<f64>]) -> WavefrontEstimate {
        WavefrontEstimate {
            samples: dirs
                .iter()
                .map(|d| WfSample { point: vec![0.0; 3], direction: d.clone(), exponent: 1.0, confidence: 0.75, marginal: false })
                .collect(),
            window_scale: 1.0,
            n_directions: dirs.len(),
            cell_angle: 0.1,
            decay_threshold: 4.0,
        }
    }

    #[test]
    fn verdict_trivial_cases() {
        let g = SpacetimeModel::minkowski(3, 3.0);
        let seeds: Vec<CotangentPoint> =
            (0..12).map(|k| (k as f64 * 0.5).sin_cos()).map(|(s, c)| CotangentPoint { q: vec![0.0; 3], xi: vec![-1.0, c, s] }).collect();
        let r = predicted_r(&g, &seeds, (0.0, 1.0), 2).unwrap();
        let same = msc_verdict(&estimate_of(&r.diagonal_directions()), &r, 10f64.to_radians(), 0.9).unwrap();
        assert_eq!((same.completeness, same.soundness, same.pass), (1.0, 1.0, true));
        let empty = msc_verdict(&estimate_of(&[]), &r, 10f64.to_radians(), 0.9).unwrap();
        assert_eq!(empty.completeness, 0.0);
        assert!(!empty.pass);
        let none = PredictedSetR { samples: vec![], seeds: vec![], coparallel_residual: 0.0 };
        assert_eq!(msc_verdict(&estimate_of(&[]), &none, 0.1, 0.9), Err(MicrolocalError::EmptyPrediction));
    }
}
