//! Shared numerical kernels: embedded Runge-Kutta integration, Gauss rules,
//! adaptive Gauss-Kronrod quadrature, Richardson extrapolation and small
//! dense linear algebra on stack buffers.

pub mod fd;
pub mod linalg;
pub mod ode;
pub mod quad;
pub mod richardson;

pub use num_complex::Complex64 as C64;

/// Largest spacetime dimension supported by the stack-buffer kernels.
pub const MAX_DIM: usize = 8;
