//! Richardson extrapolation to a vanishing regulator.

use super::C64;
use serde::{Deserialize, Serialize};

/// Extrapolated limit together with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub value: C64,
    pub error: f64,
}

/// Neville-table extrapolation of `values[i] = F(h[i])` to `h = 0`, assuming
/// `F(h) = F(0) + a_p h^p + a_{p+1} h^{p+1} + …` with `p = leading_power`.
/// The step sequence must be geometric (constant ratio `h[i]/h[i+1]`).
///
/// The error estimate is the gap between the two most refined diagonal
/// entries plus `floor` (the accumulated quadrature error of the inputs).
pub fn extrapolate(h: &[f64], values: &[C64], leading_power: u32, floor: f64) -> Extrapolated {
    assert_eq!(h.len(), values.len());
    assert!(!h.is_empty());
    let n = h.len();
    let mut table: Vec<Vec<C64>> = vec![values.to_vec()];
    for level in 1..n {
        let prev = &table[level - 1];
        let p = (leading_power as usize + level - 1) as i32;
        let row: Vec<C64> = (0..n - level)
            .map(|i| {
                let r = (h[i] / h[i + 1]).powi(p);
                (prev[i + 1] * r - prev[i]) / (r - 1.0)
            })
            .collect();
        table.push(row);
    }
    let best = table[n - 1][0];
    let gap = if n >= 2 { (best - table[n - 2][1]).norm() } else { f64::INFINITY };
    Extrapolated { value: best, error: gap + floor }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_polynomial_error_terms() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let v: Vec<C64> = h.iter().map(|&e| C64::new(1.0 + 2.0 * e - 3.0 * e * e + e * e * e, e)).collect();
        let r = extrapolate(&h, &v, 1, 0.0);
        assert!((r.value - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn second_order_start() {
        let h = [0.2, 0.1, 0.05];
        let v: Vec<C64> = h.iter().map(|&e| C64::new(5.0 + e * e - e * e * e, 0.0)).collect();
        let r = extrapolate(&h, &v, 2, 0.0);
        assert!((r.value.re - 5.0).abs() < 1e-12);
    }
}
