//! CIDEr-D: TF-IDF weighted n-gram cosine similarity with count clipping and a
//! Gaussian length penalty, scaled by 10.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{check_corpus, mean, ngram_counts, EvalInstance, MetricError};
use crate::exec::Execution;

pub const CIDER_MAX_N: usize = 4;
/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;
const SCALE: f64 = 10.0;

/// Document frequencies of n-grams (orders 1..=4) over a set of reference
/// sets. One document is one reference set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfStats {
    doc_freq: HashMap<Vec<String>, u32>,
    num_docs: usize,
}

impl IdfStats {
    pub fn from_reference_sets<'a, I>(sets: I) -> Self
    where
        I: IntoIterator<Item = &'a [Vec<String>]>,
    {
        let mut doc_freq: HashMap<Vec<String>, u32> = HashMap::new();
        let mut num_docs = 0;
        for refs in sets {
            num_docs += 1;
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in refs {
                for n in 1..=CIDER_MAX_N {
                    seen.extend(ngram_counts(r, n).into_keys());
                }
            }
            for gram in seen {
                *doc_freq.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        IdfStats { doc_freq, num_docs }
    }

    pub fn from_instances(instances: &[EvalInstance]) -> Self {
        Self::from_reference_sets(instances.iter().map(|i| i.references.as_slice()))
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn doc_freq(&self, gram: &[String]) -> u32 {
        self.doc_freq.get(gram).copied().unwrap_or(0)
    }

    /// `log(N) - log(max(1, df))`; unseen n-grams get the maximum weight.
    pub fn idf(&self, gram: &[String]) -> f64 {
        let n = (self.num_docs.max(1)) as f64;
        n.ln() - f64::from(self.doc_freq(gram).max(1)).ln()
    }
}

struct TfIdf<'a> {
    // ordered maps keep float summation order, and so scores, reproducible
    vecs: Vec<BTreeMap<&'a [String], f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn tf_idf<'a>(tokens: &'a [String], idf: &IdfStats) -> TfIdf<'a> {
    let mut vecs = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for n in 1..=CIDER_MAX_N {
        let v: BTreeMap<&[String], f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, tf)| (g, f64::from(tf) * idf.idf(g)))
            .collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(v);
    }
    TfIdf {
        vecs,
        norms,
        len: tokens.len(),
    }
}

fn similarity(cand: &TfIdf, refv: &TfIdf) -> f64 {
    let delta = cand.len as f64 - refv.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..CIDER_MAX_N {
        let mut val = 0.0;
        for (gram, &wc) in &cand.vecs[n] {
            if let Some(&wr) = refv.vecs[n].get(gram) {
                val += wc.min(wr) * wr;
            }
        }
        if cand.norms[n] != 0.0 && refv.norms[n] != 0.0 {
            val /= cand.norms[n] * refv.norms[n];
        }
        total += val * penalty;
    }
    total
}

/// CIDEr-D of a single candidate against its references under fixed IDF
/// statistics. An empty candidate scores 0.
pub fn cider_d_score(candidate: &[String], references: &[Vec<String>], idf: &IdfStats) -> f64 {
    if references.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let cand = tf_idf(candidate, idf);
    let sum: f64 = references
        .iter()
        .map(|r| similarity(&cand, &tf_idf(r, idf)))
        .sum();
    sum / CIDER_MAX_N as f64 / references.len() as f64 * SCALE
}

/// Corpus CIDEr-D with IDF taken from this corpus's reference sets.
pub fn cider(instances: &[EvalInstance]) -> Result<f64, MetricError> {
    cider_with(instances, Execution::default())
}

pub fn cider_with(instances: &[EvalInstance], exec: Execution) -> Result<f64, MetricError> {
    check_corpus(instances)?;
    let idf = IdfStats::from_instances(instances);
    let scores = exec.map(instances, |i| cider_d_score(&i.candidate, &i.references, &idf));
    Ok(mean(&scores))
}
