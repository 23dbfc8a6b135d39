//! Streaming estimation of a signal observed through a sequence of
//! blurred, noisy, resolution-limited measurements `Y_i = K_i θ + ε W_i`.
//!
//! All forward operators are assumed to share one unitary eigenbasis (for
//! circular convolutions, the DFT). Observations are rotated into that basis
//! and folded into a constant-size sufficient statistic; estimates are
//! component-wise shrinkage rules applied to it.

pub mod accumulator;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod isotonic;
pub mod noise;
pub mod simlab;
pub mod spectral;

pub use accumulator::{BStatistic, SufStat};
pub use error::{Error, Result};
pub use estimators::{estimate, Estimate, EstimatorSpec, WeightVector};
pub use spectral::{EigenvalueVector, Kernel, Layout, SpectralBasis};

pub use num_complex::Complex64;
