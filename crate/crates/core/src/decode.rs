//! Inference-time sequence generation over any next-token model.
//!
//! Decoders never emit the ids in [`SpecialTokens::non_emittable`]; the model
//! distribution is renormalized over the remaining ids at every step. Scores
//! are summed log-probabilities with no length normalization. A hypothesis
//! that reaches `max_len` interior tokens gets `eos` appended without scoring
//! it.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::textproc::{SpecialTokens, TokenSequence};

/// Default cap on interior tokens: the longest reference captions are 20 words.
pub const DEFAULT_MAX_LEN: usize = 22;
pub const DEFAULT_BEAM: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("max_len must be >= 1")]
    InvalidMaxLen,
    #[error("beam width must be >= 1")]
    InvalidBeam,
}

/// A conditional next-token distribution.
pub trait NextTokenModel {
    fn vocab_size(&self) -> usize;

    /// Log-probabilities over the whole vocabulary given the context vector and
    /// the previous token.
    fn next_token_logprobs(&self, context: &[f64], prev: u32) -> Vec<f64>;
}

impl<M: NextTokenModel + ?Sized> NextTokenModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_token_logprobs(&self, context: &[f64], prev: u32) -> Vec<f64> {
        (**self).next_token_logprobs(context, prev)
    }
}

/// Renormalizes `logits` (or log-probabilities) over the emittable ids.
/// Non-emittable ids get `-inf`.
pub fn emittable_log_softmax(logits: &[f64], specials: &SpecialTokens) -> Vec<f64> {
    let allowed = |i: usize| specials.is_emittable(i as u32);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &z)| (z - max).exp())
        .sum();
    let lse = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &z)| if allowed(i) { z - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// The decoding policy: the model's next-token distribution restricted to
/// emittable ids.
pub fn policy_logprobs<M: NextTokenModel + ?Sized>(
    model: &M,
    context: &[f64],
    prev: u32,
    specials: &SpecialTokens,
) -> Vec<f64> {
    emittable_log_softmax(&model.next_token_logprobs(context, prev), specials)
}

/// A decoded caption and its summed log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: TokenSequence,
    pub logprob: f64,
}

/// A sampled caption. `emitted` holds every token drawn from the policy in
/// order (ending with `eos` unless the length cap was hit) and
/// `step_logprobs[t]` is the policy log-probability of `emitted[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub tokens: TokenSequence,
    pub emitted: Vec<u32>,
    pub step_logprobs: Vec<f64>,
}

impl Sampled {
    pub fn logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }
}

fn argmax_lowest(lp: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in lp.iter().enumerate() {
        if x > lp[best] {
            best = i;
        }
    }
    best
}

fn frame(interior: &[u32], specials: &SpecialTokens) -> TokenSequence {
    TokenSequence::from_interior(interior, specials)
        .expect("decoders only emit valid interior tokens")
}

/// Greedy decoding: the most likely emittable token at each step, ties going
/// to the lowest id.
pub fn greedy_decode<M: NextTokenModel + ?Sized>(
    model: &M,
    context: &[f64],
    specials: &SpecialTokens,
    max_len: usize,
) -> Result<Decoded, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::InvalidMaxLen);
    }
    let mut interior = Vec::new();
    let mut prev = specials.sos;
    let mut score = 0.0;
    while interior.len() < max_len {
        let lp = policy_logprobs(model, context, prev, specials);
        let tok = argmax_lowest(&lp);
        score += lp[tok];
        if tok as u32 == specials.eos {
            break;
        }
        interior.push(tok as u32);
        prev = tok as u32;
    }
    Ok(Decoded {
        tokens: frame(&interior, specials),
        logprob: score,
    })
}

#[derive(Debug, Clone)]
struct Hypothesis {
    interior: Vec<u32>,
    last: u32,
    score: f64,
}

/// Beam search on summed log-probability.
///
/// Each step expands every live hypothesis by every emittable token and keeps
/// the best `beam` expansions (ties: earlier parent, then lower id).
/// Expansions ending in `eos` retire to the completed pool. Hypotheses still
/// live at `max_len` join the pool with `eos` appended. The best pool entry
/// is returned, ties going to the one found first.
pub fn beam_decode<M: NextTokenModel + ?Sized>(
    model: &M,
    context: &[f64],
    specials: &SpecialTokens,
    beam: usize,
    max_len: usize,
) -> Result<Decoded, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::InvalidMaxLen);
    }
    if beam == 0 {
        return Err(DecodeError::InvalidBeam);
    }
    let mut live = vec![Hypothesis {
        interior: Vec::new(),
        last: specials.sos,
        score: 0.0,
    }];
    let mut pool: Vec<(Vec<u32>, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut expansions: Vec<(f64, usize, u32)> = Vec::new();
        for (rank, h) in live.iter().enumerate() {
            let lp = policy_logprobs(model, context, h.last, specials);
            for (tok, &l) in lp.iter().enumerate() {
                if l > f64::NEG_INFINITY {
                    expansions.push((h.score + l, rank, tok as u32));
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        expansions.truncate(beam);
        let mut next = Vec::with_capacity(expansions.len());
        for (score, rank, tok) in expansions {
            let parent = &live[rank];
            if tok == specials.eos {
                pool.push((parent.interior.clone(), score));
            } else {
                let mut interior = parent.interior.clone();
                interior.push(tok);
                next.push(Hypothesis {
                    interior,
                    last: tok,
                    score,
                });
            }
        }
        live = next;
        let best_done = pool.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        // scores only decrease, so no live hypothesis can overtake the pool
        if live.iter().all(|h| h.score <= best_done) {
            live.clear();
            break;
        }
    }
    pool.extend(live.into_iter().map(|h| (h.interior, h.score)));
    let mut best = 0;
    for (i, p) in pool.iter().enumerate() {
        if p.1 > pool[best].1 {
            best = i;
        }
    }
    let (interior, score) = pool.swap_remove(best);
    Ok(Decoded {
        tokens: frame(&interior, specials),
        logprob: score,
    })
}

/// Ancestral sampling at temperature 1 from the decoding policy.
pub fn sample_decode<M: NextTokenModel + ?Sized>(
    model: &M,
    context: &[f64],
    specials: &SpecialTokens,
    max_len: usize,
    seed: u64,
) -> Result<Sampled, DecodeError> {
    sample_decode_with_rng(model, context, specials, max_len, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_decode_with_rng<M: NextTokenModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    context: &[f64],
    specials: &SpecialTokens,
    max_len: usize,
    rng: &mut R,
) -> Result<Sampled, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::InvalidMaxLen);
    }
    let mut emitted = Vec::new();
    let mut step_logprobs = Vec::new();
    let mut prev = specials.sos;
    let mut interior_len = 0;
    while interior_len < max_len {
        let lp = policy_logprobs(model, context, prev, specials);
        let weights: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let tok = WeightedIndex::new(&weights)
            .expect("policy has at least one emittable token")
            .sample(rng);
        emitted.push(tok as u32);
        step_logprobs.push(lp[tok]);
        if tok as u32 == specials.eos {
            break;
        }
        interior_len += 1;
        prev = tok as u32;
    }
    let interior: Vec<u32> = emitted
        .iter()
        .copied()
        .filter(|&t| t != specials.eos)
        .collect();
    Ok(Sampled {
        tokens: frame(&interior, specials),
        emitted,
        step_logprobs,
    })
}
