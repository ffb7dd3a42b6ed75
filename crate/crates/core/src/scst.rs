//! Self-critical sequence training.
//!
//! For one clip, a caption `w` is sampled from the model and scored with the
//! reward `r(w)`; the greedy decode `w_hat` of the same model provides the
//! baseline. The surrogate loss
//!
//! ```text
//! L = -(r(w) - r(w_hat)) * sum_t log pi(w_t)
//! ```
//!
//! has the single-sample policy-gradient estimate as its gradient. `pi` is the
//! decoding policy (model distribution restricted to emittable tokens) and the
//! sum runs over every sampled token, including a sampled `eos`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audiofeat::MelSpectrogram;
use crate::captioner::{pool_features, AdamConfig, AdamState, Gradients, ModelError, ToyCaptionModel};
use crate::decode::{emittable_log_softmax, greedy_decode, sample_decode, Decoded, Sampled, DEFAULT_MAX_LEN};
use crate::exec::Execution;
use crate::metrics::{cider_d_score, IdfStats};
use crate::textproc::{SpecialTokens, Vocabulary};
use crate::Result;

/// CIDEr-D of one candidate under frozen IDF statistics. Empty candidates
/// score 0.
pub fn caption_reward(candidate: &[String], references: &[Vec<String>], idf: &IdfStats) -> f64 {
    cider_d_score(candidate, references, idf)
}

/// CIDEr-D reward over token ids, with IDF frozen from the training
/// references before fine-tuning starts.
#[derive(Debug, Clone)]
pub struct CiderReward {
    idf: IdfStats,
    vocab: Vocabulary,
}

impl CiderReward {
    pub fn new(idf: IdfStats, vocab: Vocabulary) -> Self {
        CiderReward { idf, vocab }
    }

    pub fn from_clips(clips: &[RlClip], vocab: Vocabulary) -> Self {
        let idf = IdfStats::from_reference_sets(clips.iter().map(|c| c.references.as_slice()));
        Self::new(idf, vocab)
    }

    pub fn idf(&self) -> &IdfStats {
        &self.idf
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Ids outside the vocabulary are scored as `<unk>`.
    pub fn reward(&self, interior: &[u32], references: &[Vec<String>]) -> f64 {
        let words: Vec<String> = interior
            .iter()
            .map(|&id| self.vocab.word(id).unwrap_or(crate::textproc::UNK_TOKEN).to_string())
            .collect();
        caption_reward(&words, references, &self.idf)
    }
}

/// The sampled caption, the greedy baseline and their rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSample {
    pub sampled: Sampled,
    pub baseline: Decoded,
    pub r_sample: f64,
    pub r_baseline: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScstStep {
    pub loss: f64,
    pub grads: Gradients,
    pub sample: RewardSample,
}

/// Surrogate loss `-advantage * sum_t log pi(emitted_t)` and its gradient,
/// conditioning each step on the previously emitted token.
///
/// A zero advantage returns an exactly zero loss and gradient.
pub fn policy_gradient(
    model: &ToyCaptionModel,
    specials: &SpecialTokens,
    pooled: &[f64],
    emitted: &[u32],
    advantage: f64,
) -> std::result::Result<(f64, Gradients), ModelError> {
    if let Some(&bad) = emitted.iter().find(|&&t| !specials.is_emittable(t)) {
        return Err(ModelError::InvalidConfig(format!("token {bad} is not emittable")));
    }
    if advantage == 0.0 || emitted.is_empty() {
        model.project_context(pooled)?;
        return Ok((0.0, Gradients::zeros(model.dims())));
    }
    let mut prevs = Vec::with_capacity(emitted.len());
    prevs.push(specials.sos);
    prevs.extend_from_slice(&emitted[..emitted.len() - 1]);
    model.accumulate_sequence(pooled, &prevs, |t, logits, dlogits| {
        let target = emitted[t] as usize;
        let lp = emittable_log_softmax(logits, specials);
        for (w, (d, l)) in dlogits.iter_mut().zip(&lp).enumerate() {
            let onehot = if w == target { 1.0 } else { 0.0 };
            *d = -advantage * (onehot - l.exp());
        }
        -advantage * lp[target]
    })
}

/// One SCST estimate: sample, greedy baseline, advantage and the surrogate's
/// gradient. `reward` scores interior token ids.
pub fn scst_gradient<F>(
    model: &ToyCaptionModel,
    specials: &SpecialTokens,
    pooled: &[f64],
    reward: F,
    max_len: usize,
    seed: u64,
) -> Result<ScstStep>
where
    F: Fn(&[u32]) -> f64,
{
    let context = model.project_context(pooled)?;
    let sampled = sample_decode(model, &context, specials, max_len, seed)?;
    let baseline = greedy_decode(model, &context, specials, max_len)?;
    let r_sample = reward(sampled.tokens.interior());
    let r_baseline = reward(baseline.tokens.interior());
    let advantage = r_sample - r_baseline;
    let (loss, grads) = policy_gradient(model, specials, pooled, &sampled.emitted, advantage)?;
    Ok(ScstStep {
        loss,
        grads,
        sample: RewardSample {
            sampled,
            baseline,
            r_sample,
            r_baseline,
            advantage,
        },
    })
}

/// A fine-tuning clip: spectrogram plus normalized reference captions.
#[derive(Debug, Clone, PartialEq)]
pub struct RlClip {
    pub mel: MelSpectrogram,
    pub references: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScstConfig {
    /// Constant learning rate.
    pub lr: f64,
    pub batch: usize,
    /// Independent samples drawn per clip and step, each against the same
    /// greedy baseline; their gradients are averaged.
    pub samples_per_clip: usize,
    pub max_len: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ScstConfig {
    fn default() -> Self {
        ScstConfig {
            lr: 5e-5,
            batch: 32,
            samples_per_clip: 1,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Per-epoch record; `mean_reward` is the mean greedy (baseline) reward seen
/// during the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScstEpochLog {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_advantage: f64,
}

/// Policy-gradient fine-tuning with Adam at a constant learning rate.
///
/// Sampling seeds are drawn in order from one generator seeded with
/// `cfg.seed`, so the run is deterministic regardless of `exec`.
pub fn train_scst(
    model: &mut ToyCaptionModel,
    clips: &[RlClip],
    reward: &CiderReward,
    specials: &SpecialTokens,
    cfg: &ScstConfig,
    epochs: usize,
    exec: Execution,
) -> Result<Vec<ScstEpochLog>> {
    if clips.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) || cfg.batch == 0 || cfg.samples_per_clip == 0 {
        return Err(ModelError::InvalidConfig(format!(
            "lr {} batch {} samples_per_clip {}",
            cfg.lr, cfg.batch, cfg.samples_per_clip
        ))
        .into());
    }
    let pooled: Vec<Vec<f64>> = clips.iter().map(|c| pool_features(&c.mel)).collect();
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let (mut reward_sum, mut adv_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch) {
            let items: Vec<(usize, u64)> = batch
                .iter()
                .flat_map(|&i| std::iter::repeat_n(i, cfg.samples_per_clip))
                .map(|i| (i, rng.gen()))
                .collect();
            let steps = exec.map(&items, |&(i, seed)| {
                let refs = &clips[i].references;
                scst_gradient(model, specials, &pooled[i], |ids| reward.reward(ids, refs), cfg.max_len, seed)
            });
            let mut total = Gradients::zeros(model.dims());
            for step in steps {
                let step = step?;
                reward_sum += step.sample.r_baseline;
                adv_sum += step.sample.advantage;
                total.add_assign(&step.grads);
            }
            total.scale(1.0 / items.len() as f64);
            model.apply_adam(&total, &mut adam, cfg.lr, &cfg.adam)?;
        }
        let n = (clips.len() * cfg.samples_per_clip) as f64;
        log.push(ScstEpochLog {
            epoch,
            mean_reward: reward_sum / n,
            mean_advantage: adv_sum / n,
        });
    }
    Ok(log)
}

/// Mean reward of greedy decodes over `clips`.
pub fn mean_greedy_reward(
    model: &ToyCaptionModel,
    clips: &[RlClip],
    reward: &CiderReward,
    specials: &SpecialTokens,
    max_len: usize,
    exec: Execution,
) -> Result<f64> {
    let rewards = exec.map(clips, |clip| -> Result<f64> {
        let ctx = model.encode_context(&clip.mel)?;
        let d = greedy_decode(model, &ctx, specials, max_len)?;
        Ok(reward.reward(d.tokens.interior(), &clip.references))
    });
    let mut sum = 0.0;
    for r in rewards {
        sum += r?;
    }
    Ok(sum / clips.len().max(1) as f64)
}
