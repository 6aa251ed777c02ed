//! Magnitude-ranked graph predictors for building neural architectures.
//!
//! The pipeline: train a graph network whose per-hop embedding norms track a
//! target metric, score every module subgraph of a macro search space, then
//! either shrink the space to its best subgraphs or assemble the top
//! architectures directly. A small multi-objective evolutionary search and a
//! family of synthetic benchmark oracles are included for evaluation.

pub mod archspace;
pub mod bench;
pub mod builder;
pub mod evonas;
mod hash;
pub mod predictor;
pub mod scorer;
pub mod numerics;
mod scalar;

pub use scalar::Scalar;

/// Double-precision tensor.
pub type Tensor = numerics::Tensor<f64>;
/// Double-precision differentiation tape.
pub type Graph = numerics::Graph<f64>;
/// Double-precision AdamW.
pub type AdamW = numerics::AdamW<f64>;
