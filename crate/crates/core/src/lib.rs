//! Steerable pyramid weighted (SPW) cross-entropy.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: real/complex 2-D grids, the 2-D FFT, padding and spectral resampling.
//! - [`filters`]: the radial/angular frequency responses and sampled filter banks.
//! - [`pyramid`]: analytic steerable pyramid decomposition and its tight-frame inverse.
//! - [`envelope`]: subband amplitude envelopes and Fourier zero-pad upsampling.
//! - [`spwloss`]: weight-map synthesis, pixel weights, weighted cross-entropy and its gradient.
//! - [`metrics`]: mIoU, mDice, variation of information and adjusted Rand index.

pub mod envelope;
pub mod error;
pub mod filters;
pub mod grid;
pub mod metrics;
pub mod pyramid;
pub mod spwloss;

pub use error::{Result, SpwError};
pub use filters::{FilterBank, FilterBankSpec};
pub use grid::{ComplexGrid, GridSize, RealGrid};
pub use pyramid::PyramidDecomposition;
pub use spwloss::{ClassWeightMode, LabelField, ProbabilityField, Reduction, SpwConfig, WeightMap};
