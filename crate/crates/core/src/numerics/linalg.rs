//! Dense helpers for the small (m ≤ 8) matrices used in the hot loops.

use super::MAX_DIM;

/// Inverts the row-major `m × m` matrix `a` into `out` by Gauss-Jordan with
/// partial pivoting. Returns the determinant, or `None` when singular.
pub fn invert(m: usize, a: &[f64], out: &mut [f64]) -> Option<f64> {
    assert!(m <= MAX_DIM);
    let mut w = [0.0; MAX_DIM * MAX_DIM];
    w[..m * m].copy_from_slice(&a[..m * m]);
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let scale = a[..m * m].iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut det = 1.0;
    for c in 0..m {
        let mut p = c;
        for r in c + 1..m {
            if w[r * m + c].abs() > w[p * m + c].abs() {
                p = r;
            }
        }
        let piv = w[p * m + c];
        if piv.abs() <= 1e-14 * scale {
            return None;
        }
        if p != c {
            det = -det;
            for k in 0..m {
                w.swap(p * m + k, c * m + k);
                out.swap(p * m + k, c * m + k);
            }
        }
        det *= piv;
        let inv = 1.0 / piv;
        for k in 0..m {
            w[c * m + k] *= inv;
            out[c * m + k] *= inv;
        }
        for r in 0..m {
            if r != c {
                let f = w[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        w[r * m + k] -= f * w[c * m + k];
                        out[r * m + k] -= f * out[c * m + k];
                    }
                }
            }
        }
    }
    Some(det)
}

/// Determinant of a row-major `m × m` matrix.
pub fn det(m: usize, a: &[f64]) -> f64 {
    let mut tmp = [0.0; MAX_DIM * MAX_DIM];
    invert(m, a, &mut tmp).unwrap_or(0.0)
}

/// Solves `a x = b` for small systems.
pub fn solve(m: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut inv = [0.0; MAX_DIM * MAX_DIM];
    invert(m, a, &mut inv)?;
    Some((0..m).map(|i| (0..m).map(|j| inv[i * m + j] * b[j]).sum()).collect())
}

/// Minkowski bilinear form with signature (+,−,…,−).
pub fn eta(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] - a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a = [2.0, 1.0, 0.0, 1.0, -3.0, 0.5, 0.0, 0.5, -1.0];
        let mut inv = [0.0; 9];
        let d = invert(3, &a, &mut inv).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        // cofactor expansion
        let expect = 2.0 * (3.0 - 0.25) - 1.0 * (-1.0);
        assert!((d - expect).abs() < 1e-13);
    }

    #[test]
    fn singular_detected() {
        let mut inv = [0.0; 4];
        assert!(invert(2, &[1.0, 2.0, 2.0, 4.0], &mut inv).is_none());
    }
}
