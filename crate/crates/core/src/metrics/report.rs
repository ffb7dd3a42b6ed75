use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bleu_with, cider_with, meteor_lite_with, rouge_l_with, EvalInstance, MetricError};
use crate::exec::Execution;

/// Corpus scores for one candidate set.
///
/// `meteor` is the exact-match variant (no stem or synonym stages). `spice` is
/// never computed here; it is carried through when supplied externally, and
/// `spider` is present only when `spice` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub spice: Option<f64>,
    pub spider: Option<f64>,
}

/// SPIDEr: the mean of CIDEr and SPICE.
pub fn spider_combine(cider_score: f64, spice_score: f64) -> Result<f64, MetricError> {
    for (name, value) in [("cider", cider_score), ("spice", spice_score)] {
        if !value.is_finite() || value < 0.0 {
            return Err(MetricError::InvalidScore { name, value });
        }
    }
    Ok((cider_score + spice_score) / 2.0)
}

pub fn evaluate_corpus(
    instances: &[EvalInstance],
    external_spice: Option<f64>,
) -> Result<MetricReport, MetricError> {
    evaluate_corpus_with(instances, external_spice, Execution::default())
}

pub fn evaluate_corpus_with(
    instances: &[EvalInstance],
    external_spice: Option<f64>,
    exec: Execution,
) -> Result<MetricReport, MetricError> {
    let b = bleu_with(instances, 4, exec)?;
    let cider = cider_with(instances, exec)?;
    let spider = external_spice
        .map(|spice| spider_combine(cider, spice))
        .transpose()?;
    Ok(MetricReport {
        bleu1: b[0],
        bleu2: b[1],
        bleu3: b[2],
        bleu4: b[3],
        rouge_l: rouge_l_with(instances, exec)?,
        meteor: meteor_lite_with(instances, exec)?,
        cider,
        spice: external_spice,
        spider,
    })
}

impl MetricReport {
    /// `key: value` lines with fixed key names and four decimals. Absent
    /// `spice`/`spider` lines are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("bleu1", Some(self.bleu1)),
            ("bleu2", Some(self.bleu2)),
            ("bleu3", Some(self.bleu3)),
            ("bleu4", Some(self.bleu4)),
            ("rouge_l", Some(self.rouge_l)),
            ("meteor", Some(self.meteor)),
            ("cider", Some(self.cider)),
            ("spice", self.spice),
            ("spider", self.spider),
        ];
        for (key, value) in rows {
            if let Some(v) = value {
                let _ = writeln!(out, "{key}: {v:.4}");
            }
        }
        out.push_str("meteor_variant: exact_match\n");
        out
    }
}
