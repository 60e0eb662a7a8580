//! Quasi-uniform direction grids on the unit sphere `S^{d−1}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub dirs: Vec<Vec<f64>>,
    /// Typical angular spacing between neighbouring directions (radians).
    pub cell_angle: f64,
}

/// Angle between two nonzero vectors.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

pub fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

impl DirectionGrid {
    /// 2 directions in 1D, 64 in 2D, 256 in 3D and 4D.
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => Self::fibonacci(1, 2),
            2 => Self::fibonacci(2, 64),
            _ => Self::fibonacci(d, 256),
        }
    }

    /// Fibonacci lattice on `S²`, equal angles on `S¹`, super-Fibonacci
    /// spiral on `S³`.
    pub fn fibonacci(d: usize, n: usize) -> Self {
        let dirs: Vec<Vec<f64>> = match d {
            1 => vec![vec![-1.0], vec![1.0]],
            2 => (0..n).map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
            3 => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|i| {
                        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                        let r = (1.0 - z * z).sqrt();
                        let t = golden * i as f64;
                        vec![z, r * t.cos(), r * t.sin()]
                    })
                    .collect()
            }
            4 => {
                let phi = 2f64.sqrt();
                let psi = 1.533_751_168_755_204_3;
                (0..n)
                    .map(|i| {
                        let s = (i as f64 + 0.5) / n as f64;
                        let (r, big_r) = (s.sqrt(), (1.0 - s).sqrt());
                        let a = 2.0 * PI * i as f64 / phi;
                        let b = 2.0 * PI * i as f64 / psi;
                        vec![r * a.sin(), r * a.cos(), big_r * b.sin(), big_r * b.cos()]
                    })
                    .collect()
            }
            _ => panic!("direction grids exist for d = 1..=4"),
        };
        let cell_angle = match d {
            1 => PI,
            2 => 2.0 * PI / n as f64,
            3 => (4.0 * PI / n as f64).sqrt(),
            _ => (2.0 * PI * PI / n as f64).cbrt(),
        };
        Self { dirs, cell_angle }
    }

    pub fn dim(&self) -> usize {
        self.dirs[0].len()
    }

    /// Index of the grid direction closest to `v`.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let u = normalized(v);
        self.dirs
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("empty direction grid")
    }

    /// Largest angle from any point of a dense sample of the sphere to the grid.
    pub fn covering_angle(&self, probes: &[Vec<f64>]) -> f64 {
        probes.iter().map(|p| angle(p, &self.dirs[self.nearest(p)])).fold(0.0, f64::max)
    }
}
