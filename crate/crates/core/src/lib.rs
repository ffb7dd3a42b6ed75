//! Caption-style sequence generation toolkit.
//!
//! The crate is organised around the pipeline of a caption generator:
//!
//! * [`textproc`]: caption normalization, vocabularies and framed token sequences.
//! * [`audiofeat`]: log-mel spectrograms and SpecAugment masking.
//! * [`captioner`]: a small trainable conditional model with a label-smoothed
//!   cross-entropy objective, Adam and a warm-up/step-decay schedule.
//! * [`decode`]: greedy, beam and multinomial decoding over any next-token model.
//! * [`scst`]: self-critical policy-gradient fine-tuning against a CIDEr-D reward.
//! * [`metrics`]: BLEU, ROUGE-L, exact-match METEOR, CIDEr-D and SPIDEr.
//! * [`corpus`]: dataset ingestion and caption phrase statistics.
//!
//! Data-parallel inner loops go through [`exec::Execution`], which uses rayon
//! when the `parallel` feature is enabled and runs sequentially otherwise.

pub mod audiofeat;
pub mod captioner;
pub mod corpus;
pub mod decode;
pub mod exec;
pub mod metrics;
pub mod scst;
pub mod synth;
pub mod textproc;

mod error;

pub use error::{Error, Result};
pub use exec::Execution;
