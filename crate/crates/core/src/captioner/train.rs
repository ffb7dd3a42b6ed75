use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lr_at_epoch, log_softmax, pool_features, AdamState, Gradients, ModelError, ToyCaptionModel, TrainConfig};
use crate::audiofeat::{spec_augment, MelSpectrogram};
use crate::exec::Execution;
use crate::textproc::TokenSequence;

/// Label-smoothed, teacher-forced cross entropy of `target` and its gradients.
///
/// `pooled` is the time-pooled spectrogram (the encoder input), so gradients
/// reach the context projection. With `T = len(target) - 1` predicted steps
/// the loss is `-(1/T) sum_t sum_w q_t(w) log p_t(w)` with
/// `q_t = (1 - eps) onehot(y_t) + eps / V`.
pub fn ce_loss_label_smoothed(
    model: &ToyCaptionModel,
    pooled: &[f64],
    target: &TokenSequence,
    eps: f64,
) -> Result<(f64, Gradients), ModelError> {
    if !(0.0..1.0).contains(&eps) {
        return Err(ModelError::InvalidConfig(format!("label smoothing {eps}")));
    }
    let ids = target.ids();
    let vocab = model.dims().vocab;
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab) {
        return Err(ModelError::TokenOutOfRange { id, vocab });
    }
    let steps = ids.len() - 1;
    let inv_t = 1.0 / steps as f64;
    let uniform = eps / vocab as f64;
    model.accumulate_sequence(pooled, &ids[..steps], |t, logits, dlogits| {
        let y = ids[t + 1] as usize;
        let lp = log_softmax(logits);
        let sum_lp: f64 = lp.iter().sum();
        let loss = -(1.0 - eps) * lp[y] - uniform * sum_lp;
        for (w, (d, l)) in dlogits.iter_mut().zip(&lp).enumerate() {
            let q = uniform + if w == y { 1.0 - eps } else { 0.0 };
            *d = (l.exp() - q) * inv_t;
        }
        loss * inv_t
    })
}

/// One training clip: its spectrogram and every reference caption.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionedClip {
    pub mel: MelSpectrogram,
    pub captions: Vec<TokenSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

/// Teacher-forced training with Adam and the warm-up/decay schedule.
///
/// Every (clip, caption) pair is one sample; samples are reshuffled each
/// epoch from a generator seeded with `cfg.seed`. Per-sample gradients may be
/// computed in parallel but are summed in sample order, so results do not
/// depend on `exec`.
pub fn train_ce(
    model: &mut ToyCaptionModel,
    clips: &[CaptionedClip],
    cfg: &TrainConfig,
    epochs: usize,
    exec: Execution,
) -> Result<Vec<EpochLog>, ModelError> {
    cfg.validate()?;
    let mut pairs: Vec<(usize, usize)> = clips
        .iter()
        .enumerate()
        .flat_map(|(c, clip)| (0..clip.captions.len()).map(move |k| (c, k)))
        .collect();
    if pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let pooled: Vec<Vec<f64>> = clips.iter().map(|c| pool_features(&c.mel)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        pairs.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in pairs.chunks(cfg.batch) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let items: Vec<((usize, usize), u64)> = batch.iter().copied().zip(seeds).collect();
            let results = exec.map(&items, |&((c, k), seed)| {
                let features = match &cfg.spec_augment {
                    Some(params) => pool_features(&spec_augment(&clips[c].mel, params, seed)?),
                    None => pooled[c].clone(),
                };
                ce_loss_label_smoothed(model, &features, &clips[c].captions[k], cfg.label_eps)
            });
            let mut total = Gradients::zeros(model.dims());
            for r in results {
                let (loss, g) = r?;
                loss_sum += loss;
                total.add_assign(&g);
            }
            total.scale(1.0 / batch.len() as f64);
            model.apply_adam(&total, &mut adam, lr, &cfg.adam)?;
        }
        log.push(EpochLog {
            epoch,
            lr,
            mean_loss: loss_sum / pairs.len() as f64,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::ModelDims;
    use crate::textproc::SpecialTokens;

    fn dims() -> ModelDims {
        ModelDims {
            vocab: 8,
            embed: 3,
            feature: 4,
            context: 3,
        }
    }

    fn seq(interior: &[u32]) -> TokenSequence {
        TokenSequence::from_interior(interior, &SpecialTokens::standard()).unwrap()
    }

    #[test]
    fn uniform_model_loss_is_log_v() {
        let m = ToyCaptionModel::zeros(dims());
        for eps in [0.0, 0.1, 0.5] {
            let (loss, _) = ce_loss_label_smoothed(&m, &[1.0, 2.0, 3.0, 4.0], &seq(&[4, 5, 6]), eps).unwrap();
            assert!((loss - 8f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn eps_zero_is_mean_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ToyCaptionModel::new_random(dims(), &mut rng);
        let pooled = [0.5, -1.0, 2.0, 0.1];
        let target = seq(&[4, 7, 5]);
        let (loss, _) = ce_loss_label_smoothed(&m, &pooled, &target, 0.0).unwrap();
        let ctx = m.project_context(&pooled).unwrap();
        let ids = target.ids();
        let nll: f64 = ids
            .windows(2)
            .map(|w| -m.next_token_logprobs(&ctx, w[0]).unwrap()[w[1] as usize])
            .sum::<f64>()
            / (ids.len() - 1) as f64;
        assert!((loss - nll).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_target_is_a_fault() {
        let m = ToyCaptionModel::zeros(dims());
        let t = seq(&[9]);
        assert!(matches!(
            ce_loss_label_smoothed(&m, &[0.0; 4], &t, 0.1),
            Err(ModelError::TokenOutOfRange { id: 9, .. })
        ));
    }

    fn clip(values: [f64; 4], captions: &[&[u32]]) -> CaptionedClip {
        CaptionedClip {
            mel: MelSpectrogram::from_values(1, 4, values.to_vec(), 1, 1).unwrap(),
            captions: captions.iter().map(|c| seq(c)).collect(),
        }
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = ToyCaptionModel::new_random(dims(), &mut rng);
        let before = m.clone();
        let log = train_ce(&mut m, &[clip([1.0; 4], &[&[4, 5]])], &TrainConfig::default(), 0, Execution::Sequential).unwrap();
        assert!(log.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn empty_dataset_is_a_fault() {
        let mut m = ToyCaptionModel::zeros(dims());
        assert!(matches!(
            train_ce(&mut m, &[], &TrainConfig::default(), 1, Execution::Sequential),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn execution_mode_does_not_change_results() {
        let clips = vec![
            clip([1.0, 0.0, -1.0, 2.0], &[&[4, 5], &[4, 6]]),
            clip([0.0, 3.0, 1.0, -2.0], &[&[7], &[7, 5, 6]]),
        ];
        let cfg = TrainConfig {
            batch: 2,
            lr0: 0.05,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init = ToyCaptionModel::new_random(dims(), &mut rng);
        let mut a = init.clone();
        let mut b = init.clone();
        let la = train_ce(&mut a, &clips, &cfg, 4, Execution::Sequential).unwrap();
        let lb = train_ce(&mut b, &clips, &cfg, 4, Execution::Parallel).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_eq!(a.embeddings(), init.embeddings());
    }
}
