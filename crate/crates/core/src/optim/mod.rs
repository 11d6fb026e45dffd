//! AdamW and the training loop.

mod adamw;
mod train;

pub use adamw::{AdamW, AdamWConfig};
pub use train::{evaluate, train, EpochRecord, Evaluation, TrainConfig, TrainLog};
