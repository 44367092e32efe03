//! Hyperspectral signature features from the undecimated wavelet transform,
//! per-wavelength non-homogeneous hidden Markov chains and their binary
//! mixture-of-Gaussians collapse, plus the classifiers and benchmark harness
//! that consume them.

pub mod benchmark;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod labeling;
pub mod model_io;
pub mod mog;
pub mod nhmc;
pub mod scalar;
pub mod semantics;
pub mod similarity;
pub mod wavelet;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CoeffMatrixF64 = wavelet::CoeffMatrix<f64>;
pub type CoeffMatrixF32 = wavelet::CoeffMatrix<f32>;
pub type ChainParamsF64 = nhmc::ChainParams<f64>;
pub type ChainParamsF32 = nhmc::ChainParams<f32>;
pub type NhmcModelF64 = nhmc::NhmcModel<f64>;
pub type NhmcModelF32 = nhmc::NhmcModel<f32>;
pub type MogChainParamsF64 = mog::MogChainParams<f64>;
pub type MogModelF64 = mog::MogModel<f64>;
pub type MogModelF32 = mog::MogModel<f32>;
