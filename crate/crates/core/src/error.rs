use thiserror::Error;

use crate::audiofeat::AudioError;
use crate::captioner::ModelError;
use crate::corpus::CorpusError;
use crate::decode::DecodeError;
use crate::metrics::MetricError;
use crate::textproc::TextError;

/// Crate-wide error, wrapping the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
