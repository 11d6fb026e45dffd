//! The classifier: a parameter-free delta front end, a residual temporal
//! convolution stage and an MLP head.
//!
//! Shape flow for the full variant with `C` channels, `T` steps, delta step
//! `S` and depth `D`:
//!
//! ```text
//! [B, C, T] -> delta [B, 2C, T-S] -> projection [B, 2C*D, T-S]
//!   -> 2 residual blocks (same shape) -> pool + layer norm [B, 2C, D]
//!   -> flatten [B, 2C*D] -> MLP [B, n_classes]
//! ```

mod config;
mod forward;
mod io;
mod params;

pub use config::{ModelConfig, PointwiseGroups, Variant, N_RESIDUAL_BLOCKS};
pub use forward::{
    bidirectional_delta, forward, forward_bound, predict_logits, ForwardOutput, ForwardTrace, MomentUpdate, Stage,
};
pub use io::{decode_params, encode_params, load_params, load_params_for, save_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use params::{param_breakdown, param_count, ModelParams, ParamBreakdown, ParamKind, ParamTensor};
