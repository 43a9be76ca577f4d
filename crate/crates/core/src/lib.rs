//! Predictive coding (PC) training next to backpropagation (BP) and a damped
//! Newton baseline, with tools that relate PC inference to an adaptive
//! trust-region step.
//!
//! - [`network`]: bias-free feedforward nets, squared-error loss, exact gradients
//! - [`energy`]: free energy, its gradients, and the inference (relaxation) phase
//! - [`trainers`]: BP / PC / trust-region-Newton loops, stopping rules, lr grid search
//! - [`analysis`]: Fisher information, trust-region predictions, 1MLP closed forms,
//!   near-saddle dynamics, landscapes, perturbation robustness
//! - [`data`]: regression task sampler and MNIST IDX loading
//! - [`experiments`]: drivers that produce the data behind each figure
//! - [`report`]: CSV/JSON writers for experiment output

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod network;
pub mod report;
pub mod trainers;

#[cfg(test)]
pub(crate) mod testutil;

pub use energy::{ActivityState, InferenceResult, InferenceSchedule, Precisions};
pub use error::{Error, Result};
pub use network::{Activation, Batch, NetworkSpec, WeightSet};
