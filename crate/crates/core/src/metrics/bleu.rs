use super::{check_corpus, ngram_counts, EvalInstance, MetricError};
use crate::exec::Execution;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, Default)]
struct BleuStats {
    cand_len: usize,
    ref_len: usize,
    matches: [u64; MAX_ORDER],
    guesses: [u64; MAX_ORDER],
}

fn instance_stats(inst: &EvalInstance, max_n: usize) -> BleuStats {
    let c = inst.candidate.len();
    // closest reference length, ties to the shorter one
    let ref_len = inst
        .references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    let mut stats = BleuStats {
        cand_len: c,
        ref_len,
        ..Default::default()
    };
    for n in 1..=max_n {
        let cand = ngram_counts(&inst.candidate, n);
        let ref_counts: Vec<_> = inst.references.iter().map(|r| ngram_counts(r, n)).collect();
        for (gram, &count) in &cand {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            stats.matches[n - 1] += u64::from(count.min(max_ref));
        }
        stats.guesses[n - 1] = c.saturating_sub(n - 1) as u64;
    }
    stats
}

/// Corpus BLEU_1..=BLEU_max_n with clipped counts pooled over the corpus and a
/// corpus-level brevity penalty from closest reference lengths.
pub fn bleu(instances: &[EvalInstance], max_n: usize) -> Result<Vec<f64>, MetricError> {
    bleu_with(instances, max_n, Execution::default())
}

pub fn bleu_with(
    instances: &[EvalInstance],
    max_n: usize,
    exec: Execution,
) -> Result<Vec<f64>, MetricError> {
    if !(1..=MAX_ORDER).contains(&max_n) {
        return Err(MetricError::InvalidOrder(max_n));
    }
    check_corpus(instances)?;
    let per_instance = exec.map(instances, |inst| instance_stats(inst, max_n));
    let mut total = BleuStats::default();
    for s in &per_instance {
        total.cand_len += s.cand_len;
        total.ref_len += s.ref_len;
        for k in 0..max_n {
            total.matches[k] += s.matches[k];
            total.guesses[k] += s.guesses[k];
        }
    }
    let brevity = if total.cand_len == 0 {
        0.0
    } else if total.cand_len < total.ref_len {
        (1.0 - total.ref_len as f64 / total.cand_len as f64).exp()
    } else {
        1.0
    };
    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for k in 0..max_n {
        if total.matches[k] == 0 || total.guesses[k] == 0 {
            zero = true;
        } else {
            log_sum += (total.matches[k] as f64 / total.guesses[k] as f64).ln();
        }
        let n = (k + 1) as f64;
        scores.push(if zero {
            0.0
        } else {
            brevity * (log_sum / n).exp()
        });
    }
    Ok(scores)
}
