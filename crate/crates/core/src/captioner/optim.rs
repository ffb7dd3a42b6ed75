use super::{Gradients, ModelError, ToyCaptionModel};
use crate::audiofeat::SpecAugmentParams;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, allocated on the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Fails without touching anything if any gradient is non-finite or shapes
/// disagree.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), ModelError> {
    if params.len() != grads.len() {
        return Err(ModelError::DimensionMismatch {
            what: "tensor count",
            expected: params.len(),
            found: grads.len(),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(ModelError::DimensionMismatch {
                what: "gradient tensor",
                expected: p.len(),
                found: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFiniteGradient(i));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(ModelError::InvalidConfig(
            "optimizer state does not match parameter shapes".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

impl ToyCaptionModel {
    /// Adam update of the trainable tensors. Embeddings never change.
    pub fn apply_adam(
        &mut self,
        grads: &Gradients,
        state: &mut AdamState,
        lr: f64,
        cfg: &AdamConfig,
    ) -> Result<(), ModelError> {
        let mut params = self.trainable_mut();
        adam_step(&mut params, &grads.tensors(), state, lr, cfg)
    }
}

/// Cross-entropy training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub warmup_epochs: usize,
    /// Decay period in epochs after warm-up; 0 disables decay.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub batch: usize,
    pub label_eps: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// SpecAugment applied to every training sample when set.
    pub spec_augment: Option<SpecAugmentParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            warmup_epochs: 5,
            decay_every: 10,
            decay_factor: 0.1,
            batch: 32,
            label_eps: 0.1,
            adam: AdamConfig::default(),
            seed: 0,
            spec_augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("lr0 = {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.label_eps) {
            return Err(ModelError::InvalidConfig(format!(
                "label smoothing {} outside [0, 1)",
                self.label_eps
            )));
        }
        if self.batch == 0 {
            return Err(ModelError::InvalidConfig("batch size 0".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "decay factor {}",
                self.decay_factor
            )));
        }
        Ok(())
    }
}

/// Learning rate for a 1-based epoch: linear warm-up to `lr0` over the first
/// `warmup_epochs`, then multiplied by `decay_factor` once every `decay_every`
/// epochs, the first decay landing `decay_every` epochs after warm-up ends.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64, ModelError> {
    if epoch == 0 {
        return Err(ModelError::InvalidEpoch(epoch));
    }
    if epoch <= cfg.warmup_epochs {
        return Ok(cfg.lr0 * epoch as f64 / cfg.warmup_epochs as f64);
    }
    if cfg.decay_every == 0 {
        return Ok(cfg.lr0);
    }
    let decays = (epoch - cfg.warmup_epochs - 1) / cfg.decay_every;
    Ok(cfg.lr0 * cfg.decay_factor.powi(decays as i32))
}
