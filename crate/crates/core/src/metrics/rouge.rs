use super::{check_corpus, mean, EvalInstance, MetricError};
use crate::exec::Execution;

/// Recall weight in the LCS F-measure, as in the common captioning toolkit.
pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence of `a` and `b`.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn lcs_f(candidate: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Best LCS F-measure of `candidate` over `references`.
pub fn rouge_l_sentence(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| lcs_f(candidate, r))
        .fold(0.0, f64::max)
}

/// Corpus ROUGE-L: mean over instances of the best per-reference F-measure.
pub fn rouge_l(instances: &[EvalInstance]) -> Result<f64, MetricError> {
    rouge_l_with(instances, Execution::default())
}

pub fn rouge_l_with(instances: &[EvalInstance], exec: Execution) -> Result<f64, MetricError> {
    check_corpus(instances)?;
    let scores = exec.map(instances, |i| rouge_l_sentence(&i.candidate, &i.references));
    Ok(mean(&scores))
}
