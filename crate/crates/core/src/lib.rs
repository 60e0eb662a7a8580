//! Numerical toolkit for Hadamard parametrices of wave and Dirac operators on
//! Lorentzian manifolds, their microlocal (wavefront) structure and scaling
//! limits.

pub mod bundle;
pub mod geometry;
pub mod hadamard;
pub mod microlocal;
pub mod numerics;
pub mod scaling;
pub mod cli;
