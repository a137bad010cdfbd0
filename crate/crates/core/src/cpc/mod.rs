//! Contrastive predictive coding: a strided convolutional encoder turns raw
//! 16 kHz audio into latents every 10 ms, a GRU summarises them into context
//! vectors, and bilinear heads score future latents against in-batch
//! negatives with the InfoNCE loss. The trained contexts are speaker features.

mod config;
mod extract;
mod gru;
mod loss;
mod model;
mod train;

pub use config::{parameter_count, CpcConfig, Variant};
pub use extract::{extract_context_features, SAMPLE_RATE};
pub use gru::GruLayer;
pub use loss::{infonce, joint_loss, sample_anchor, LossReport};
pub use model::{header_path, CheckpointHeader, CpcModel, Direction};
pub use train::{history_csv, train, EpochLog, TrainOutcome};

#[cfg(test)]
mod tests;
