//! Assembly of the sections `U`, `V^(n)` (even m) and `T^(n)` (odd m) from
//! the Hadamard coefficients `U_k`.

use super::{pochhammer_even, CoefficientTable, HadamardError};
use crate::bundle::FibreMatrix;
use crate::numerics::C64;

/// Truncated Hadamard series in dimension `m` at order `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadamardSeries {
    pub m: usize,
    pub n: usize,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

impl HadamardSeries {
    pub fn new(m: usize, n: usize) -> Self {
        Self { m, n }
    }

    pub fn is_even(&self) -> bool {
        self.m % 2 == 0
    }

    /// Highest coefficient index used.
    pub fn required_order(&self) -> usize {
        if self.is_even() {
            (self.m - 2) / 2 + self.n
        } else {
            self.n + (self.m - 3) / 2
        }
    }

    fn need(&self, coeffs: &[FibreMatrix], k: usize) -> Result<(), HadamardError> {
        if coeffs.len() <= k {
            return Err(HadamardError::InvalidInput(format!("need U_0..U_{k}, got {} coefficients", coeffs.len())));
        }
        Ok(())
    }

    /// `U = Σ_{k=0}^{(m−4)/2} (4−m,k)^{-1} U_k s^k`.
    pub fn u(&self, coeffs: &[FibreMatrix], s: f64) -> Result<FibreMatrix, HadamardError> {
        if !self.is_even() {
            return Err(HadamardError::BadParity { what: "U", m: self.m });
        }
        let top = (self.m - 4) / 2;
        self.need(coeffs, top)?;
        let mut out = FibreMatrix::zeros(coeffs[0].nrows(), coeffs[0].ncols());
        for (k, uk) in coeffs.iter().enumerate().take(top + 1) {
            out += uk * C64::new(s.powi(k as i32) / pochhammer_even(4.0 - self.m as f64, k), 0.0);
        }
        Ok(out)
    }

    /// `V^(n) = (2, m/2−1) Σ_{k=0}^{n} U_{(m−2)/2+k} s^k / (2^k k!)`.
    pub fn v(&self, coeffs: &[FibreMatrix], s: f64) -> Result<FibreMatrix, HadamardError> {
        if !self.is_even() {
            return Err(HadamardError::BadParity { what: "V", m: self.m });
        }
        let shift = (self.m - 2) / 2;
        self.need(coeffs, shift + self.n)?;
        let pre = pochhammer_even(2.0, self.m / 2 - 1);
        let mut out = FibreMatrix::zeros(coeffs[0].nrows(), coeffs[0].ncols());
        for k in 0..=self.n {
            let c = pre * s.powi(k as i32) / (2f64.powi(k as i32) * factorial(k));
            out += &coeffs[shift + k] * C64::new(c, 0.0);
        }
        Ok(out)
    }

    /// `T^(n) = Σ_{k=0}^{n+(m−3)/2} (4−m,k)^{-1} U_k s^k`.
    pub fn t(&self, coeffs: &[FibreMatrix], s: f64) -> Result<FibreMatrix, HadamardError> {
        if self.is_even() {
            return Err(HadamardError::BadParity { what: "T", m: self.m });
        }
        let top = self.required_order();
        self.need(coeffs, top)?;
        let mut out = FibreMatrix::zeros(coeffs[0].nrows(), coeffs[0].ncols());
        for (k, uk) in coeffs.iter().enumerate().take(top + 1) {
            out += uk * C64::new(s.powi(k as i32) / pochhammer_even(4.0 - self.m as f64, k), 0.0);
        }
        Ok(out)
    }
}

/// `U`, `V^(n)`, `T^(n)` on every sample of a coefficient table; entries are
/// `None` where the parity excludes them.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSeries {
    pub u: Option<Vec<Vec<FibreMatrix>>>,
    pub v: Option<Vec<Vec<FibreMatrix>>>,
    pub t: Option<Vec<Vec<FibreMatrix>>>,
}

/// Evaluates the series on the table, with `s_values[ray][sample]` the
/// world function at each sample.
pub fn assemble_series(table: &CoefficientTable, s_values: &[Vec<f64>], n: usize, m: usize) -> Result<AssembledSeries, HadamardError> {
    let series = HadamardSeries::new(m, n);
    if s_values.len() != table.rays.len() {
        return Err(HadamardError::InvalidInput("one s list per ray expected".into()));
    }
    let per_ray = |f: &dyn Fn(&[FibreMatrix], f64) -> Result<FibreMatrix, HadamardError>| -> Result<Vec<Vec<FibreMatrix>>, HadamardError> {
        table
            .rays
            .iter()
            .zip(s_values)
            .map(|(ray, ss)| {
                (0..ray.t.len())
                    .map(|i| {
                        let coeffs: Vec<FibreMatrix> = ray.u.iter().map(|uk| uk[i].clone()).collect();
                        f(&coeffs, ss[i])
                    })
                    .collect()
            })
            .collect()
    };
    if series.is_even() {
        Ok(AssembledSeries { u: Some(per_ray(&|c, s| series.u(c, s))?), v: Some(per_ray(&|c, s| series.v(c, s))?), t: None })
    } else {
        Ok(AssembledSeries { u: None, v: None, t: Some(per_ray(&|c, s| series.t(c, s))?) })
    }
}
