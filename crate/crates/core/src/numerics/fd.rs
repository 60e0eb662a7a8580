//! Fourth-order central finite differences.

/// Offsets and weights of the 4th-order first-derivative stencil (divide by h).
pub const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// Offsets and weights of the 4th-order second-derivative stencil (divide by h²).
pub const D2: [(f64, f64); 5] = [
    (-2.0, -1.0 / 12.0),
    (-1.0, 16.0 / 12.0),
    (0.0, -30.0 / 12.0),
    (1.0, 16.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

/// d/dt f at 0 for a scalar function of one variable.
pub fn deriv1<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> f64 {
    D1.iter().map(|&(o, w)| w * f(o * h)).sum::<f64>() / h
}

/// d²/dt² f at 0.
pub fn deriv2<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> f64 {
    D2.iter().map(|&(o, w)| w * f(o * h)).sum::<f64>() / (h * h)
}

/// Vector-valued first derivative: `out = d/dt f(t)|_0`.
pub fn deriv1_vec<F: FnMut(f64) -> Vec<f64>>(mut f: F, h: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &(o, w) in D1.iter() {
        let v = f(o * h);
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (a, b) in out.iter_mut().zip(v) {
            *a += w * b / h;
        }
    }
    out
}

/// Mixed second derivative ∂²f/∂a∂b at 0 of a two-variable function, 4th order.
pub fn mixed2<F: FnMut(f64, f64) -> f64>(mut f: F, h: f64) -> f64 {
    let mut acc = 0.0;
    for &(oa, wa) in D1.iter() {
        for &(ob, wb) in D1.iter() {
            acc += wa * wb * f(oa * h, ob * h);
        }
    }
    acc / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_quartic_are_exact() {
        let f = |t: f64| 3.0 + 2.0 * t - t * t + 0.5 * t.powi(3) + 0.25 * t.powi(4);
        assert!((deriv1(|t| f(0.3 + t), 1e-2) - (2.0 - 0.6 + 1.5 * 0.09 + 0.027)).abs() < 1e-10);
        assert!((deriv2(|t| f(0.3 + t), 1e-2) - (-2.0 + 3.0 * 0.3 + 3.0 * 0.09)).abs() < 1e-8);
    }

    #[test]
    fn mixed_derivative_of_product() {
        let v = mixed2(|a, b| (1.0 + a).sin() * (2.0 + b).exp(), 1e-3);
        assert!((v - 1f64.cos() * 2f64.exp()).abs() < 1e-8);
    }
}
