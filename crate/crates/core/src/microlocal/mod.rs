//! Wavefront sets: a windowed-Fourier estimator for sampled distributions,
//! the set `R` predicted by the null bicharacteristic flow, the
//! propagation-of-singularities closure and the comparison verdict.

pub mod directions;
pub mod estimator;
pub mod predict;
pub mod sampled;

use crate::geometry::GeometryError;
use thiserror::Error;

pub use directions::DirectionGrid;
pub use estimator::{estimate_wavefront, wf_translation_invariant, EstimatorOptions, WavefrontEstimate, WfSample};
pub use predict::{msc_verdict, predicted_r, pst_closure, set_distance, MscReport, PredictedSetR, RSample};
pub use sampled::{band_limited_kernel_3d, boundary_value_1d, SampledDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicrolocalError {
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("window around {point:?} exceeds the sample grid")]
    WindowClipped { point: Vec<f64> },
    #[error("seed {index} is not a past-directed null covector")]
    NonNullSeed { index: usize },
    #[error("sample {index} carries a zero or non-null covector")]
    NonNullInput { index: usize },
    #[error("predicted set is empty")]
    EmptyPrediction,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
