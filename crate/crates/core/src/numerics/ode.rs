//! Dormand-Prince 5(4) embedded Runge-Kutta integrator with step-size control.
//!
//! The integrator lands exactly on every requested output time and can be
//! asked to record every accepted step as well. A stop predicate is checked
//! after each accepted step; when it fires the run ends early.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub record_steps: bool,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, h_init: 0.0, h_min: 1e-14, max_steps: 200_000, record_steps: false }
    }

    pub fn recording(mut self) -> Self {
        self.record_steps = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct OdeOutcome {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub stopped_early: bool,
}

impl OdeOutcome {
    pub fn last(&self) -> (&f64, &Vec<f64>) {
        (self.t.last().expect("empty outcome"), self.y.last().expect("empty outcome"))
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` through the increasing or decreasing
/// list `t_out` (all on the same side of `t0`).
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_out: &[f64],
    opts: &OdeOptions,
    mut stop: S,
) -> Result<OdeOutcome, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let mut out = OdeOutcome::default();
    let Some(&t_end) = t_out.last() else {
        return Ok(out);
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let span = (t_end - t0).abs();
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { (span * 1e-2).max(1e-6).min(span.max(1e-12)) };
    if opts.record_steps {
        out.t.push(t);
        out.y.push(y.clone());
    }
    f(t, &y, &mut k[0]);
    let mut next = 0usize;
    // outputs that coincide with t0
    while next < t_out.len() && (t_out[next] - t0).abs() <= 0.0 {
        if !opts.record_steps {
            out.t.push(t);
            out.y.push(y.clone());
        }
        next += 1;
    }
    let mut steps = 0usize;
    while next < t_out.len() {
        let target = t_out[next];
        let remaining = (target - t) * dir;
        let h_free = h;
        let mut hit = false;
        if h >= remaining {
            h = remaining;
            hit = true;
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps(opts.max_steps));
        }
        let hs = h * dir;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += hs * A[s][j] * k[j][i];
                }
                ytmp[i] = acc;
            }
            f(t + C[s] * hs, &ytmp, &mut k[s]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut a5 = y[i];
            let mut e = 0.0;
            for s in 0..7 {
                a5 += hs * B5[s] * k[s][i];
                e += hs * (B5[s] - B4[s]) * k[s][i];
            }
            y5[i] = a5;
            let sc = opts.atol + opts.rtol * y[i].abs().max(a5.abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            if h <= opts.h_min {
                return Err(OdeError::NonFinite(t));
            }
            h *= 0.25;
            out.rejected += 1;
            continue;
        }
        if err <= 1.0 {
            t = if hit { target } else { t + hs };
            std::mem::swap(&mut y, &mut y5);
            // FSAL: the 7th stage is f at the new point
            k.swap(0, 6);
            out.accepted += 1;
            if opts.record_steps {
                out.t.push(t);
                out.y.push(y.clone());
            }
            if hit {
                if !opts.record_steps {
                    out.t.push(t);
                    out.y.push(y.clone());
                }
                next += 1;
            }
            if stop(t, &y) {
                out.stopped_early = true;
                if !opts.record_steps && !hit {
                    out.t.push(t);
                    out.y.push(y.clone());
                }
                return Ok(out);
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if hit { h_free.max(h * fac) } else { h * fac };
        } else {
            out.rejected += 1;
            h *= (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            if h < opts.h_min {
                return Err(OdeError::StepUnderflow { t, h });
            }
        }
    }
    Ok(out)
}

/// Fixed-step Dormand-Prince (5th-order weights, no error control) through
/// the increasing list `t_out`; each output interval is split into equal
/// substeps no longer than `h_max`. The step sequence depends only on
/// `t0`, `t_out` and `h_max`, so the numerical solution is a smooth function
/// of the initial data.
pub fn integrate_fixed<F>(mut f: F, t0: f64, y0: &[f64], t_out: &[f64], h_max: f64) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut out = Vec::with_capacity(t_out.len());
    for &target in t_out {
        let span = target - t;
        let steps = if span > 0.0 { (span / h_max).ceil().max(1.0) as usize } else { 0 };
        for j in 0..steps {
            let ts = t + span * j as f64 / steps as f64;
            let h = span / steps as f64;
            f(ts, &y, &mut k[0]);
            for s in 1..6 {
                for i in 0..n {
                    let mut acc = y[i];
                    for jj in 0..s {
                        acc += h * A[s][jj] * k[jj][i];
                    }
                    ytmp[i] = acc;
                }
                f(ts + C[s] * h, &ytmp, &mut k[s]);
            }
            for i in 0..n {
                y[i] += h * (0..6).map(|s| B5[s] * k[s][i]).sum::<f64>();
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite(ts + h));
            }
        }
        t = target;
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_phase() {
        let opts = OdeOptions::with_tol(1e-11);
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.7).collect();
        let out = integrate(|_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
        }, 0.0, &[1.0, 0.0], &times, &opts, |_, _| false)
        .unwrap();
        assert_eq!(out.t.len(), times.len());
        for (t, y) in out.t.iter().zip(&out.y) {
            assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn fixed_step_matches_exponential() {
        let times = [0.1, 0.5, 1.0];
        let ys = integrate_fixed(|_, y, d| d[0] = -y[0], 0.0, &[1.0], &times, 0.05).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_integration_and_stop() {
        let opts = OdeOptions::with_tol(1e-10).recording();
        let out = integrate(|_, y, d| d[0] = y[0], 0.0, &[1.0], &[-2.0], &opts, |_, y| y[0] < 0.5).unwrap();
        assert!(out.stopped_early);
        let (t, y) = out.last();
        assert!(y[0] < 0.5 && *t < -0.69 && *t > -1.5);
    }
}
