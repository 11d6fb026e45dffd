//! EEG driving-fatigue classification with a parameter-free bidirectional
//! temporal-difference front end, grouped gated temporal convolutions and an
//! MLP head.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors and a tape-based reverse-mode autodiff engine
//! - [`model`]: the network, its parameters and the `DGNW` parameter file
//! - [`optim`]: AdamW and the epoch/batch training loop
//! - [`data`]: the `EEGD` dataset file, synthetic EEG and fold planning
//! - [`metrics`]: confusion matrices and cross-validation summaries
//! - [`experiment`]: k-fold cross-validation and ablation sweeps
//! - [`cli`]: the `deltagate` command-line front end
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod selfcheck;
pub mod tensor;

pub use error::{Error, Result};
