//! Gauss-Legendre rules and globally adaptive Gauss-Kronrod (7/15) quadrature
//! for complex-valued integrands with user breakpoints.

use super::C64;
use std::collections::BinaryHeap;

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| v * h).collect())
}

/// Gauss-Hermite nodes and weights for the weight `e^{−x²}` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    let err = ((rk - rg) * h).norm();
    (rk * h, err)
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    a: f64,
    b: f64,
    val: C64,
    err: f64,
}

impl PartialEq for Seg {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Seg {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration: value and estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss-Kronrod integration of `f` over the union of the
/// intervals delimited by `points` (sorted breakpoints including both ends).
pub fn adaptive<F: FnMut(f64) -> C64>(mut f: F, points: &[f64], abs_tol: f64, rel_tol: f64, max_segments: usize) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            evals += 15;
            total += v;
            err += e;
            heap.push(Seg { a: w[0], b: w[1], val: v, err: e });
        }
    }
    while err > abs_tol.max(rel_tol * total.norm()) && heap.len() < max_segments {
        let Some(s) = heap.pop() else { break };
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            heap.push(Seg { err: 0.0, ..s });
            err -= s.err;
            continue;
        }
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        evals += 30;
        total += v1 + v2 - s.val;
        err += e1 + e2 - s.err;
        heap.push(Seg { a: s.a, b: m, val: v1, err: e1 });
        heap.push(Seg { a: m, b: s.b, val: v2, err: e2 });
    }
    // re-sum to limit drift from incremental updates
    let (value, error) = heap.iter().fold((C64::new(0.0, 0.0), 0.0), |(v, e), s| (v + s.val, e + s.err));
    Integral { value, error, evaluations: evals }
}

/// Real-valued convenience wrapper around [`adaptive`].
pub fn adaptive_real<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], abs_tol: f64, rel_tol: f64, max_segments: usize) -> (f64, f64) {
    let r = adaptive(|x| C64::new(f(x), 0.0), points, abs_tol, rel_tol, max_segments);
    (r.value.re, r.error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 12, 40] {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n={n} s={s}");
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        let rp = std::f64::consts::PI.sqrt();
        assert!((m0 - rp).abs() < 1e-13);
        assert!((m2 - rp / 2.0).abs() < 1e-13);
        assert!((m8 - rp * 105.0 / 16.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = adaptive(|x| C64::new(1.0 / x.sqrt(), 0.0), &[0.0, 1.0], 1e-10, 1e-12, 2000);
        assert!((r.value.re - 2.0).abs() < 1e-8, "{:?}", r);
    }

    #[test]
    fn adaptive_sharp_lorentzian() {
        let eps = 1e-3;
        let r = adaptive(|x| C64::new(0.0, eps / (x * x + eps * eps)), &[-1.0, 0.0, 1.0], 1e-12, 1e-12, 4000);
        let exact = 2.0 * (1.0 / eps).atan();
        assert!((r.value.im - exact).abs() < 1e-9);
    }
}
