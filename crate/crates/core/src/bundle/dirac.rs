//! Majorana gamma matrices and the pair of Dirac operators
//! `D_▷ = γ^a e_a^μ (∂_μ + Ω_μ) + i𝗆`, `D_◁ = γ^a e_a^μ (∂_μ + Ω_μ) − i𝗆`.
//!
//! Representation (purely imaginary, γ₀ hermitean, γ_k antihermitean):
//! - m = 3: γ₀ = σ₂, γ₁ = iσ₁, γ₂ = iσ₃;
//! - m = 4: γ₀ = σ₁⊗σ₂, γ₁ = i·1⊗σ₃, γ₂ = (iσ₂)⊗σ₂, γ₃ = −i·1⊗σ₁.

use super::{BundleError, BundleModel, FibreMatrix, FibreVector, SectionJet, WaveOperator};
use crate::geometry::{orthonormal_frame, SpacetimeModel};
use crate::numerics::{fd, C64, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli() -> [FibreMatrix; 4] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        FibreMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        FibreMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        FibreMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        FibreMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

/// Majorana representation `γ_0, …, γ_{m−1}` (lower frame indices).
pub fn make_gamma_matrices(m: usize) -> Result<Vec<FibreMatrix>, BundleError> {
    let [one, s1, s2, s3] = pauli();
    let i = c(0.0, 1.0);
    match m {
        3 => Ok(vec![s2, &s1 * i, &s3 * i]),
        4 => Ok(vec![
            s1.kronecker(&s2),
            one.kronecker(&s3) * i,
            (&s2 * i).kronecker(&s2),
            one.kronecker(&s1) * (-i),
        ]),
        other => Err(BundleError::UnsupportedDimension(other)),
    }
}

fn eta(a: usize) -> f64 {
    if a == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiracVariant {
    /// `D_▷`, mass term `+i𝗆`.
    Right,
    /// `D_◁`, mass term `−i𝗆`.
    Left,
}

impl DiracVariant {
    fn mass_sign(self) -> f64 {
        match self {
            Self::Right => 1.0,
            Self::Left => -1.0,
        }
    }
}

/// Dirac data over a spacetime; the frame field is the Gram–Schmidt frame.
#[derive(Debug, Clone)]
pub struct DiracModel {
    pub base: SpacetimeModel,
    pub gammas: Vec<FibreMatrix>,
    pub mass: f64,
}

impl DiracModel {
    pub fn new(base: SpacetimeModel, mass: f64) -> Result<Self, BundleError> {
        let gammas = make_gamma_matrices(base.dim())?;
        if base.time_axis() != 0 {
            return Err(BundleError::InvalidBundle("Dirac sector expects time axis 0".into()));
        }
        Ok(Self { base, gammas, mass })
    }

    pub fn rank(&self) -> usize {
        self.gammas[0].nrows()
    }

    /// `γ^a = η^{ab}γ_b`.
    pub fn gamma_upper(&self, a: usize) -> FibreMatrix {
        &self.gammas[a] * c(eta(a), 0.0)
    }

    /// Frame `e[μ*m + a]` and its coordinate derivatives `de[ρ][μ*m + a]`.
    fn frame_jet(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = self.base.dim();
        let e = orthonormal_frame(&self.base, x);
        let mut y = x.to_vec();
        let de = (0..m)
            .map(|r| {
                let h = self.base.fd_step(r);
                let mut acc = vec![0.0; m * m];
                for &(o, w) in fd::D1.iter() {
                    y.copy_from_slice(x);
                    y[r] += o * h;
                    let ey = orthonormal_frame(&self.base, &y);
                    acc.iter_mut().zip(&ey).for_each(|(a, b)| *a += w * b / h);
                }
                acc
            })
            .collect();
        (e, de)
    }

    /// Spin connection `Ω_μ = ¼ ω_{μab} γ^a γ^b` with
    /// `ω_μ{}^a{}_b = e^a_ν (∂_μ e_b^ν + Γ^ν_{μλ} e_b^λ)`.
    pub fn spin_connection(&self, x: &[f64]) -> Vec<FibreMatrix> {
        let m = self.base.dim();
        let r = self.rank();
        let (e, de) = self.frame_jet(x);
        let mut g = [0.0; MAX_DIM * MAX_DIM];
        let mut gam = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        self.base.metric_into(x, &mut g);
        self.base.christoffel_into(x, &mut gam);
        // coframe e^a_ν = η^{aa} g_{νλ} e_a^λ
        let mut cof = vec![0.0; m * m];
        for a in 0..m {
            for nu in 0..m {
                cof[a * m + nu] = eta(a) * (0..m).map(|l| g[nu * m + l] * e[l * m + a]).sum::<f64>();
            }
        }
        let ups: Vec<FibreMatrix> = (0..m).map(|a| self.gamma_upper(a)).collect();
        (0..m)
            .map(|mu| {
                let mut om = FibreMatrix::zeros(r, r);
                for a in 0..m {
                    for b in 0..m {
                        if a == b {
                            continue;
                        }
                        let mut w = 0.0;
                        for nu in 0..m {
                            let mut cov = de[mu][nu * m + b];
                            for l in 0..m {
                                cov += gam[nu * m * m + mu * m + l] * e[l * m + b];
                            }
                            w += cof[a * m + nu] * cov;
                        }
                        // lower the first frame index
                        let w_low = eta(a) * w;
                        om += &ups[a] * &ups[b] * c(0.25 * w_low, 0.0);
                    }
                }
                om
            })
            .collect()
    }

    /// `γ^μ(x) = e_a^μ γ^a`.
    pub fn gamma_coordinate(&self, x: &[f64]) -> Vec<FibreMatrix> {
        let m = self.base.dim();
        let e = orthonormal_frame(&self.base, x);
        (0..m)
            .map(|mu| {
                (0..m).fold(FibreMatrix::zeros(self.rank(), self.rank()), |acc, a| acc + self.gamma_upper(a) * c(e[mu * m + a], 0.0))
            })
            .collect()
    }

    /// Applies `D_▷` or `D_◁` to a spinor section at x.
    pub fn apply<F: Fn(&[f64]) -> FibreVector>(&self, variant: DiracVariant, f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
        let m = self.base.dim();
        let jet = SectionJet::new(&self.base, f, x, false)?;
        let omega = self.spin_connection(x);
        let gmu = self.gamma_coordinate(x);
        let mut out = &jet.value * c(0.0, variant.mass_sign() * self.mass);
        for mu in 0..m {
            out += &gmu[mu] * (&jet.grad[mu] + &omega[mu] * &jet.value);
        }
        Ok(out)
    }

    /// `D_▷ D_◁ f` at x by nested finite differences.
    pub fn apply_squared<F: Fn(&[f64]) -> FibreVector>(&self, f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
        let inner = |y: &[f64]| self.apply(DiracVariant::Left, f, y).unwrap_or_else(|_| FibreVector::from_element(self.rank(), c(f64::NAN, 0.0)));
        let v = self.apply(DiracVariant::Right, &inner, x)?;
        if v.iter().any(|z| !z.re.is_finite()) {
            return Err(BundleError::StencilOutOfChart(x.to_vec()));
        }
        Ok(v)
    }

    /// Coefficients `(A^ν, B)` of `D_▷D_◁` read off from constant and
    /// linear probe sections at x.
    pub fn squared_coefficients(&self, x: &[f64]) -> Result<(Vec<FibreMatrix>, FibreMatrix), BundleError> {
        let m = self.base.dim();
        let r = self.rank();
        let mut a = vec![FibreMatrix::zeros(r, r); m];
        let mut b = FibreMatrix::zeros(r, r);
        let x0 = x.to_vec();
        for col in 0..r {
            let unit = FibreVector::from_fn(r, |i, _| if i == col { c(1.0, 0.0) } else { c(0.0, 0.0) });
            let cst = |_: &[f64]| unit.clone();
            b.set_column(col, &self.apply_squared(&cst, x)?);
            for (nu, a_nu) in a.iter_mut().enumerate() {
                let lin = |y: &[f64]| &unit * c(y[nu] - x0[nu], 0.0);
                a_nu.set_column(col, &self.apply_squared(&lin, x)?);
            }
        }
        Ok((a, b))
    }

    /// Max deviation of the principal symbol of `D_▷D_◁` from `g^{μν}·1`,
    /// from quadratic probes at x.
    pub fn principal_symbol_residual(&self, x: &[f64]) -> Result<f64, BundleError> {
        let m = self.base.dim();
        let r = self.rank();
        let mut ginv = [0.0; MAX_DIM * MAX_DIM];
        self.base.inverse_metric_into(x, &mut ginv);
        let x0 = x.to_vec();
        let unit = FibreVector::from_fn(r, |i, _| if i == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let mut worst: f64 = 0.0;
        for mu in 0..m {
            for nu in mu..m {
                let q = |y: &[f64]| &unit * c(0.5 * (y[mu] - x0[mu]) * (y[nu] - x0[nu]), 0.0);
                let v = self.apply_squared(&q, x)?;
                let expect = if mu == nu { ginv[mu * m + nu] } else { 0.5 * ginv[mu * m + nu] };
                let mut e = &unit * c(expect, 0.0);
                e -= v;
                worst = worst.max(e.norm());
            }
        }
        Ok(worst)
    }

    /// The wave operator `D_▷D_◁` with coefficients extracted numerically.
    pub fn squared_wave_operator(&self) -> WaveOperator {
        let r = self.rank();
        let me = self.clone();
        let me2 = self.clone();
        let bundle = BundleModel {
            r,
            a: Arc::new(move |x: &[f64]| me.squared_coefficients(x).map(|(a, _)| a).unwrap_or_default()),
            b: Arc::new(move |x: &[f64]| me2.squared_coefficients(x).map(|(_, b)| b).unwrap_or_else(|_| FibreMatrix::zeros(r, r))),
            gamma_conj: FibreMatrix::identity(r, r),
            h: {
                let g0 = self.gammas[0].clone();
                Arc::new(move |_: &[f64]| g0.clone())
            },
            a_vanishes: false,
        };
        WaveOperator::new(self.base.clone(), bundle)
    }
}

/// Free-function form of [`DiracModel::apply`].
pub fn dirac_apply<F: Fn(&[f64]) -> FibreVector>(d: &DiracModel, variant: DiracVariant, f: &F, x: &[f64]) -> Result<FibreVector, BundleError> {
    d.apply(variant, f, x)
}

/// Matrix-valued kernel `K(x, y)` sampled on a regular grid in `x` for a
/// fixed second argument. Flattened row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernel {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<FibreMatrix>,
}

impl GridKernel {
    /// Samples a scalar kernel times the `r × r` identity.
    pub fn from_scalar<F: Fn(&[f64]) -> C64>(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>, r: usize, f: F) -> Self {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|k| {
                let x = Self::point_of(&origin, &spacing, &shape, k);
                FibreMatrix::identity(r, r) * f(&x)
            })
            .collect();
        Self { origin, spacing, shape, values }
    }

    fn point_of(origin: &[f64], spacing: &[f64], shape: &[usize], mut k: usize) -> Vec<f64> {
        let mut x = vec![0.0; shape.len()];
        for d in (0..shape.len()).rev() {
            x[d] = origin[d] + spacing[d] * (k % shape[d]) as f64;
            k /= shape[d];
        }
        x
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        Self::point_of(&self.origin, &self.spacing, &self.shape, k)
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `S_▷ = D_▷ K` in the first argument, by 4th-order differences on the grid.
/// The result lives on the interior grid (two points trimmed on every side).
pub fn dirac_parametrix_factor(d: &DiracModel, kernel: &GridKernel) -> Result<GridKernel, BundleError> {
    let m = d.base.dim();
    if kernel.shape.len() != m || kernel.shape.iter().any(|n| *n < 5) {
        return Err(BundleError::GridTooCoarse);
    }
    let shape: Vec<usize> = kernel.shape.iter().map(|n| n - 4).collect();
    let origin: Vec<f64> = kernel.origin.iter().zip(&kernel.spacing).map(|(o, h)| o + 2.0 * h).collect();
    let n: usize = shape.iter().product();
    let mut values = Vec::with_capacity(n);
    let mass = c(0.0, d.mass);
    for k in 0..n {
        let mut idx = vec![0usize; m];
        let mut rem = k;
        for ax in (0..m).rev() {
            idx[ax] = rem % shape[ax] + 2;
            rem /= shape[ax];
        }
        let x = GridKernel::point_of(&kernel.origin, &kernel.spacing, &kernel.shape, kernel.index(&idx));
        let centre = &kernel.values[kernel.index(&idx)];
        let omega = d.spin_connection(&x);
        let gmu = d.gamma_coordinate(&x);
        let mut out = centre * mass;
        for mu in 0..m {
            let mut deriv = FibreMatrix::zeros(centre.nrows(), centre.ncols());
            for &(o, w) in fd::D1.iter() {
                let mut j = idx.clone();
                j[mu] = (j[mu] as isize + o as isize) as usize;
                deriv += &kernel.values[kernel.index(&j)] * c(w / kernel.spacing[mu], 0.0);
            }
            out += &gmu[mu] * (deriv + &omega[mu] * centre);
        }
        values.push(out);
    }
    Ok(GridKernel { origin, spacing: kernel.spacing.clone(), shape, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ChartBox, Conformal, UltrastaticBump};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn models() -> Vec<SpacetimeModel> {
        vec![
            SpacetimeModel::minkowski(3, 1.0),
            SpacetimeModel::new(Arc::new(Conformal { m: 4, c: 1.0 }), ChartBox::cube(4, 1.0), 0).unwrap(),
            SpacetimeModel::new(Arc::new(UltrastaticBump { m: 3, amplitude: 0.3, width: 0.6, center: vec![0.1, 0.0] }), ChartBox::cube(3, 1.0), 0)
                .unwrap(),
        ]
    }

    fn random_spinor(rng: &mut ChaCha8Rng, r: usize) -> impl Fn(&[f64]) -> FibreVector {
        let k: Vec<[f64; 4]> = (0..r).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        move |x: &[f64]| {
            FibreVector::from_iterator(
                r,
                k.iter().map(|k| c((k[0] * x[0] + k[1] * x[1]).sin() + k[2], (k[3] * x[x.len() - 1]).cos() * x[0])),
            )
        }
    }

    #[test]
    fn clifford_adjoint_and_majorana_relations() {
        for m in [3, 4] {
            let g = make_gamma_matrices(m).unwrap();
            let r = g[0].nrows();
            for a in 0..m {
                for b in 0..m {
                    let ac = &g[a] * &g[b] + &g[b] * &g[a];
                    let want = FibreMatrix::identity(r, r) * c(if a == b { 2.0 * eta(a) } else { 0.0 }, 0.0);
                    assert!((ac - want).norm() <= 1e-15);
                }
                let adj = g[a].adjoint();
                let sign = if a == 0 { 1.0 } else { -1.0 };
                assert!((adj - &g[a] * c(sign, 0.0)).norm() == 0.0);
                assert!((g[a].map(|z| z.conj()) + &g[a]).norm() == 0.0);
            }
        }
        assert_eq!(make_gamma_matrices(5), Err(BundleError::UnsupportedDimension(5)));
    }

    #[test]
    fn gamma_matrices_are_covariantly_constant() {
        let d = DiracModel::new(models().remove(2), 0.0).unwrap();
        let x = [0.1, 0.2, -0.1];
        let m = 3;
        let omega = d.spin_connection(&x);
        let g = d.base.christoffels(&x).unwrap();
        let gx = d.gamma_coordinate(&x);
        let mut y = x.to_vec();
        for mu in 0..m {
            let h = d.base.fd_step(mu);
            for nu in 0..m {
                let mut dg = FibreMatrix::zeros(2, 2);
                for &(o, w) in fd::D1.iter() {
                    y.copy_from_slice(&x);
                    y[mu] += o * h;
                    dg += &d.gamma_coordinate(&y)[nu] * c(w / h, 0.0);
                }
                for l in 0..m {
                    dg += &gx[l] * c(g.get(nu, mu, l), 0.0);
                }
                dg += &omega[mu] * &gx[nu] - &gx[nu] * &omega[mu];
                assert!(dg.norm() <= 1e-8, "{}", dg.norm());
            }
        }
    }

    #[test]
    fn flat_constant_sections() {
        let d = DiracModel::new(SpacetimeModel::minkowski(3, 1.0), 0.0).unwrap();
        let cst = |_: &[f64]| FibreVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0)]);
        assert!(d.apply(DiracVariant::Right, &cst, &[0.0; 3]).unwrap().norm() <= 1e-12);
        let d = DiracModel::new(SpacetimeModel::minkowski(3, 1.0), 2.0).unwrap();
        let v = d.apply(DiracVariant::Right, &cst, &[0.0; 3]).unwrap();
        assert!((v - cst(&[]) * c(0.0, 2.0)).norm() <= 1e-12);
    }

    #[test]
    fn conjugation_anticommutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in models() {
            let d = DiracModel::new(model, 0.7).unwrap();
            let f = random_spinor(&mut rng, d.rank());
            let x: Vec<f64> = (0..d.base.dim()).map(|_| rng.gen_range(-0.4..0.4)).collect();
            let cf = |y: &[f64]| f(y).map(|z| z.conj());
            let lhs = d.apply(DiracVariant::Right, &f, &x).unwrap().map(|z| z.conj());
            let rhs = d.apply(DiracVariant::Right, &cf, &x).unwrap();
            assert!((lhs + rhs).norm() <= 1e-8);
        }
    }

    #[test]
    fn squared_dirac_is_a_wave_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in models() {
            let d = DiracModel::new(model, 0.5).unwrap();
            let m = d.base.dim();
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            assert!(d.principal_symbol_residual(&x).unwrap() <= 1e-6);
            let p = d.squared_wave_operator();
            let (a, b) = d.squared_coefficients(&x).unwrap();
            for _ in 0..2 {
                let f = random_spinor(&mut rng, d.rank());
                let direct = d.apply_squared(&f, &x).unwrap();
                let jet = SectionJet::new(&d.base, &f, &x, true).unwrap();
                let mut ginv = [0.0; MAX_DIM * MAX_DIM];
                d.base.inverse_metric_into(&x, &mut ginv);
                let mut via = &b * &jet.value;
                for mu in 0..m {
                    via += &a[mu] * &jet.grad[mu];
                    for nu in 0..m {
                        via += &jet.hess[mu * m + nu] * c(ginv[mu * m + nu], 0.0);
                    }
                }
                assert!((direct - &via).norm() <= 1e-6, "{}", d.base.name());
            }
            // flat space: D_▷D_◁ = □ + 𝗆²
            if d.base.is_flat_minkowski() {
                let id = FibreMatrix::identity(d.rank(), d.rank());
                assert!((b - id * c(0.25, 0.0)).norm() <= 1e-6);
                assert!(a.iter().all(|a| a.norm() <= 1e-6));
                let _ = p;
            }
        }
    }

    #[test]
    fn parametrix_factor_constant_and_flat_oracle() {
        let d = DiracModel::new(SpacetimeModel::minkowski(3, 1.0), 0.0).unwrap();
        let k = GridKernel::from_scalar(vec![0.0; 3], vec![0.05; 3], vec![5, 6, 5], 2, |_| c(1.0, -3.0));
        let s = dirac_parametrix_factor(&d, &k).unwrap();
        assert_eq!(s.shape, vec![1, 2, 1]);
        assert!(s.values.iter().all(|v| v.norm() <= 1e-12));

        let eps = 0.5;
        let beta = 1.0 / (2.0 * std::f64::consts::PI);
        let w = move |x: &[f64]| beta * (c(x[1] * x[1] + x[2] * x[2], 0.0) - c(x[0], -eps).powi(2)).powf(-0.5);
        let h = 0.01;
        let k = GridKernel::from_scalar(vec![-0.1, 0.2, -0.1], vec![h; 3], vec![9, 9, 9], 2, w);
        let s = dirac_parametrix_factor(&d, &k).unwrap();
        let g: Vec<FibreMatrix> = (0..3).map(|a| d.gamma_upper(a)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..s.len() {
            let x = s.point(i);
            let q = c(x[1] * x[1] + x[2] * x[2], 0.0) - c(x[0], -eps).powi(2);
            let pref = q.powf(-1.5) * (-0.5 * beta);
            let dq = [c(x[0], -eps) * (-2.0), c(2.0 * x[1], 0.0), c(2.0 * x[2], 0.0)];
            let exact = (0..3).fold(FibreMatrix::zeros(2, 2), |acc, mu| acc + &g[mu] * (pref * dq[mu]));
            worst = worst.max((&s.values[i] - exact).norm());
        }
        assert!(worst <= 1e-4, "{worst}");

        let k2 = GridKernel::from_scalar(vec![0.0; 3], vec![0.1; 3], vec![4, 6, 6], 2, |_| c(1.0, 0.0));
        assert_eq!(dirac_parametrix_factor(&d, &k2), Err(BundleError::GridTooCoarse));
    }
}
