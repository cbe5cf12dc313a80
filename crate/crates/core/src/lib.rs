//! Noisy hybrid quantum neural networks, model-stealing attacks against them
//! and device-variation defenses, on a density-matrix simulator.

pub mod attack;
pub mod circuit;
pub mod dataset;
pub mod defense;
pub mod device;
pub mod error;
pub mod experiment;
pub mod fsutil;
pub mod metrics;
pub mod qnn;
pub mod quantum;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision of the experiment pipeline.
pub type Real = f64;
pub type DensityMatrixF64 = quantum::DensityMatrix<f64>;
pub type DensityMatrixF32 = quantum::DensityMatrix<f32>;
pub type CircuitF64 = circuit::CircuitIR<f64>;
pub type CircuitF32 = circuit::CircuitIR<f32>;
pub type HybridModelF64 = qnn::HybridModel<f64>;
pub type HybridModelF32 = qnn::HybridModel<f32>;
pub type DatasetF64 = dataset::LabeledDataset<f64>;
