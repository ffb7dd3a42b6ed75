//! Multi-reference corpus caption metrics.
//!
//! All metrics work on normalized word lists. Corpus scores are computed per
//! instance (in parallel when enabled) and then reduced in instance order.

mod bleu;
mod cider;
mod meteor;
mod report;
mod rouge;

use std::collections::HashMap;

use thiserror::Error;

pub use bleu::{bleu, bleu_with};
pub use cider::{cider, cider_d_score, cider_with, IdfStats, CIDER_MAX_N, CIDER_SIGMA};
pub use meteor::{meteor_alignment, meteor_lite, meteor_lite_with, meteor_sentence, Alignment};
pub use report::{evaluate_corpus, evaluate_corpus_with, spider_combine, MetricReport};
pub use rouge::{lcs_length, rouge_l, rouge_l_sentence, rouge_l_with, ROUGE_BETA};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("the evaluation corpus is empty")]
    EmptyCorpus,
    #[error("instance {0} has no references")]
    NoReferences(usize),
    #[error("BLEU order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
    #[error("invalid score {name} = {value}: must be finite and non-negative")]
    InvalidScore { name: &'static str, value: f64 },
}

/// One candidate caption and its references, as normalized word lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalInstance {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalInstance {
    pub fn new(candidate: Vec<String>, references: Vec<Vec<String>>) -> Self {
        EvalInstance {
            candidate,
            references,
        }
    }

    /// Normalizes a raw candidate and raw references.
    pub fn from_raw<S: AsRef<str>>(candidate: &str, references: &[S]) -> Self {
        use crate::textproc::normalize_and_tokenize;
        EvalInstance {
            candidate: normalize_and_tokenize(candidate),
            references: references
                .iter()
                .map(|r| normalize_and_tokenize(r.as_ref()))
                .collect(),
        }
    }
}

pub(crate) fn check_corpus(instances: &[EvalInstance]) -> Result<(), MetricError> {
    if instances.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if let Some(i) = instances.iter().position(|x| x.references.is_empty()) {
        return Err(MetricError::NoReferences(i));
    }
    Ok(())
}

/// Counts of all `n`-grams of `tokens`, keyed by slices into `tokens`.
pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u32> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
