//! Counterfactual queries in quantum structural causal models, with the classical
//! structural-model embedding and the classical-to-quantum lift.

pub mod tensor;
pub mod instruments;
pub mod circuit;
pub mod random;
pub mod process;
pub mod qsm;
pub mod models;
pub mod counterfactual;
pub mod classical;
pub mod lift;
pub mod syntax;
pub mod format;
pub mod report;
pub mod cli;
