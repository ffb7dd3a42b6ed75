//! The trainable conditional caption model.
//!
//! [`ToyCaptionModel`] keeps the encoder/decoder split of a full captioner at
//! desk scale: the encoder mean-pools a log-mel spectrogram over time and
//! projects it to a context vector, and the decoder maps the context plus the
//! previous word's (frozen) embedding to next-token logits through one affine
//! layer.

mod checkpoint;
mod model;
mod optim;
mod train;

use thiserror::Error;

use crate::audiofeat::AudioError;

pub use model::{log_softmax, pool_features, Gradients, ModelDims, ToyCaptionModel};
pub use optim::{adam_step, lr_at_epoch, AdamConfig, AdamState, TrainConfig};
pub use train::{ce_loss_label_smoothed, train_ce, CaptionedClip, EpochLog};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(usize),
    #[error("epoch must be >= 1, got {0}")]
    InvalidEpoch(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
