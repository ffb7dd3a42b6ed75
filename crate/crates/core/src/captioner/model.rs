use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ModelError;
use crate::audiofeat::MelSpectrogram;
use crate::decode::NextTokenModel;

/// Sizes of a [`ToyCaptionModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub vocab: usize,
    /// Word embedding width.
    pub embed: usize,
    /// Input feature width (mel bins).
    pub feature: usize,
    /// Context vector width.
    pub context: usize,
}

impl ModelDims {
    /// Default widths: 16-wide embeddings and context over 64 mel bins.
    pub fn with_vocab(vocab: usize) -> Self {
        ModelDims {
            vocab,
            embed: 16,
            feature: 64,
            context: 16,
        }
    }

    /// Width of the decoder input `[context ; embedding]`.
    pub fn input_width(&self) -> usize {
        self.context + self.embed
    }
}

/// Gradients of the trainable tensors, laid out like the model's.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub context_proj: Vec<f64>,
    pub out_weights: Vec<f64>,
    pub out_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(dims: &ModelDims) -> Self {
        Gradients {
            context_proj: vec![0.0; dims.context * dims.feature],
            out_weights: vec![0.0; dims.vocab * dims.input_width()],
            out_bias: vec![0.0; dims.vocab],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [&self.context_proj, &self.out_weights, &self.out_bias]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.context_proj, &mut self.out_weights, &mut self.out_bias]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Mean over time of a spectrogram: the encoder's pooled input.
pub fn pool_features(mel: &MelSpectrogram) -> Vec<f64> {
    mel.time_mean()
}

/// Order-1 conditional caption model.
///
/// * `context_proj`: `context x feature`, row-major.
/// * `embed`: `vocab x embed`, frozen after construction.
/// * `out_weights`: `vocab x (context + embed)`, row-major; `out_bias`: `vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCaptionModel {
    dims: ModelDims,
    context_proj: Vec<f64>,
    embed: Vec<f64>,
    out_weights: Vec<f64>,
    out_bias: Vec<f64>,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

impl ToyCaptionModel {
    /// All parameters zero, so every next-token distribution is uniform.
    pub fn zeros(dims: ModelDims) -> Self {
        ToyCaptionModel {
            dims,
            context_proj: vec![0.0; dims.context * dims.feature],
            embed: vec![0.0; dims.vocab * dims.embed],
            out_weights: vec![0.0; dims.vocab * dims.input_width()],
            out_bias: vec![0.0; dims.vocab],
        }
    }

    /// Gaussian initialization: projection and output weights scaled by
    /// `1/sqrt(fan_in)`, unit-variance embeddings, zero bias.
    pub fn new_random<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let mut m = Self::zeros(dims);
        let proj = Normal::new(0.0, 1.0 / (dims.feature as f64).sqrt()).unwrap();
        let out = Normal::new(0.0, 1.0 / (dims.input_width() as f64).sqrt()).unwrap();
        let emb = Normal::new(0.0, 1.0).unwrap();
        m.context_proj.iter_mut().for_each(|x| *x = proj.sample(rng));
        m.embed.iter_mut().for_each(|x| *x = emb.sample(rng));
        m.out_weights.iter_mut().for_each(|x| *x = out.sample(rng));
        m
    }

    pub fn from_parts(
        dims: ModelDims,
        context_proj: Vec<f64>,
        embed: Vec<f64>,
        out_weights: Vec<f64>,
        out_bias: Vec<f64>,
    ) -> Result<Self, ModelError> {
        check_len("context_proj", dims.context * dims.feature, context_proj.len())?;
        check_len("embed", dims.vocab * dims.embed, embed.len())?;
        check_len("out_weights", dims.vocab * dims.input_width(), out_weights.len())?;
        check_len("out_bias", dims.vocab, out_bias.len())?;
        let m = ToyCaptionModel {
            dims,
            context_proj,
            embed,
            out_weights,
            out_bias,
        };
        if !m.all_finite() {
            return Err(ModelError::InvalidConfig("non-finite parameter".into()));
        }
        Ok(m)
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn context_proj(&self) -> &[f64] {
        &self.context_proj
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embed
    }

    pub fn out_weights(&self) -> &[f64] {
        &self.out_weights
    }

    pub fn out_bias(&self) -> &[f64] {
        &self.out_bias
    }

    /// Trainable tensors in [`Gradients`] order. Embeddings are not included.
    pub fn trainable(&self) -> [&[f64]; 3] {
        [&self.context_proj, &self.out_weights, &self.out_bias]
    }

    pub fn trainable_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.context_proj, &mut self.out_weights, &mut self.out_bias]
    }

    pub fn all_finite(&self) -> bool {
        self.trainable()
            .iter()
            .chain(std::iter::once(&&self.embed[..]))
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Grows the vocabulary to `new_vocab` entries: new embedding rows are
    /// drawn like a fresh model's, new output rows start at zero.
    pub fn extend_vocab<R: Rng + ?Sized>(&mut self, new_vocab: usize, rng: &mut R) -> Result<(), ModelError> {
        if new_vocab < self.dims.vocab {
            return Err(ModelError::InvalidConfig(format!(
                "cannot shrink vocabulary from {} to {new_vocab}",
                self.dims.vocab
            )));
        }
        let extra = new_vocab - self.dims.vocab;
        let emb = Normal::new(0.0, 1.0).unwrap();
        self.embed
            .extend((0..extra * self.dims.embed).map(|_| emb.sample(rng)));
        self.out_weights
            .extend(std::iter::repeat_n(0.0, extra * self.dims.input_width()));
        self.out_bias.extend(std::iter::repeat_n(0.0, extra));
        self.dims.vocab = new_vocab;
        Ok(())
    }

    /// `context_proj . pooled`.
    pub fn project_context(&self, pooled: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len("pooled features", self.dims.feature, pooled.len())?;
        Ok(self
            .context_proj
            .chunks_exact(self.dims.feature)
            .map(|row| row.iter().zip(pooled).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Encoder: mean-pool the spectrogram over time, then project.
    pub fn encode_context(&self, mel: &MelSpectrogram) -> Result<Vec<f64>, ModelError> {
        check_len("mel bins", self.dims.feature, mel.bins())?;
        self.project_context(&pool_features(mel))
    }

    fn check_step(&self, context: &[f64], prev: u32) -> Result<(), ModelError> {
        check_len("context", self.dims.context, context.len())?;
        if prev as usize >= self.dims.vocab {
            return Err(ModelError::TokenOutOfRange {
                id: prev,
                vocab: self.dims.vocab,
            });
        }
        Ok(())
    }

    /// Unchecked: `input` is `[context ; embed(prev)]`.
    pub(crate) fn logits_into(&self, input: &[f64], out: &mut [f64]) {
        let w = self.dims.input_width();
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.out_weights.chunks_exact(w))
            .zip(&self.out_bias)
        {
            *o = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b;
        }
    }

    fn decoder_input(&self, context: &[f64], prev: u32) -> Vec<f64> {
        let e = self.dims.embed;
        let mut input = Vec::with_capacity(self.dims.input_width());
        input.extend_from_slice(context);
        input.extend_from_slice(&self.embed[prev as usize * e..(prev as usize + 1) * e]);
        input
    }

    pub fn logits(&self, context: &[f64], prev: u32) -> Result<Vec<f64>, ModelError> {
        self.check_step(context, prev)?;
        let mut out = vec![0.0; self.dims.vocab];
        self.logits_into(&self.decoder_input(context, prev), &mut out);
        Ok(out)
    }

    /// Log-probabilities of the next token given the context and the previous
    /// token.
    pub fn next_token_logprobs(&self, context: &[f64], prev: u32) -> Result<Vec<f64>, ModelError> {
        Ok(log_softmax(&self.logits(context, prev)?))
    }

    /// Teacher-forced pass over `prevs` with backpropagation.
    ///
    /// For step `t` the callback receives the logits and fills `dlogits` with
    /// the loss gradient w.r.t. them, returning the step's loss contribution.
    pub(crate) fn accumulate_sequence<F>(
        &self,
        pooled: &[f64],
        prevs: &[u32],
        mut step: F,
    ) -> Result<(f64, Gradients), ModelError>
    where
        F: FnMut(usize, &[f64], &mut [f64]) -> f64,
    {
        let context = self.project_context(pooled)?;
        for &p in prevs {
            self.check_step(&context, p)?;
        }
        let d = self.dims;
        let w = d.input_width();
        let mut grads = Gradients::zeros(&d);
        let mut grad_context = vec![0.0; d.context];
        let mut logits = vec![0.0; d.vocab];
        let mut dlogits = vec![0.0; d.vocab];
        let mut loss = 0.0;
        for (t, &prev) in prevs.iter().enumerate() {
            let input = self.decoder_input(&context, prev);
            self.logits_into(&input, &mut logits);
            dlogits.fill(0.0);
            loss += step(t, &logits, &mut dlogits);
            for (v, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.out_weights[v * w..(v + 1) * w];
                let grow = &mut grads.out_weights[v * w..(v + 1) * w];
                grow.iter_mut().zip(&input).for_each(|(gw, x)| *gw += g * x);
                grads.out_bias[v] += g;
                grad_context
                    .iter_mut()
                    .zip(&row[..d.context])
                    .for_each(|(gc, wc)| *gc += g * wc);
            }
        }
        for (i, gc) in grad_context.iter().enumerate() {
            let row = &mut grads.context_proj[i * d.feature..(i + 1) * d.feature];
            row.iter_mut().zip(pooled).for_each(|(gp, x)| *gp = gc * x);
        }
        Ok((loss, grads))
    }
}

impl NextTokenModel for ToyCaptionModel {
    fn vocab_size(&self) -> usize {
        self.dims.vocab
    }

    /// # Panics
    /// If `context` does not have the model's context width or `prev` is out
    /// of range.
    fn next_token_logprobs(&self, context: &[f64], prev: u32) -> Vec<f64> {
        ToyCaptionModel::next_token_logprobs(self, context, prev)
            .unwrap_or_else(|e| panic!("next_token_logprobs: {e}"))
    }
}
