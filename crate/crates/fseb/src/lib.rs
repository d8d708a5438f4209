//! Function-space empirical Bayes regularisation of dropout networks.
//!
//! The crate trains image classifiers whose dropout masks define an
//! implicit variational family, regularised in function space by a
//! low-rank Gaussian prior over the network's outputs at synthetic context
//! points. The prior covariance tau1 * H H^T + tau2 * I comes from frozen
//! embedding vectors of those context images; at desk scale the generation
//! and embedding providers are replaced by deterministic offline stubs or
//! a documented HTTP protocol.
//!
//! Modules follow the pipeline: [`tensor`] (reverse-mode autodiff),
//! [`nn`] (architectures), [`prior`] (the functional prior), [`context`]
//! (generation, bundles, sampling), [`data`] (datasets), [`train`]
//! (objective, Adam, early stopping, hyperparameter search), [`eval`]
//! (MC-dropout predictions and metrics), and [`cli`] (the `fseb` binary's
//! command surface). See the crate examples for runnable entry points per
//! capability.

pub mod cli;
pub mod context;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
