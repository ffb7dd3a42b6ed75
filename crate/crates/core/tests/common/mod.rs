//! Independent oracles shared by the integration tests and the acceptance
//! runner. Everything here recomputes quantities from first principles using
//! only the public forward API (`logits`, `project_context`) so it does not
//! share code paths with the implementations under test.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use capkit::audiofeat::{log_mel_batch, mel_filterbank, power_spectrum, MelConfig, MelExtractor};
use capkit::captioner::{
    ce_loss_label_smoothed, pool_features, train_ce, CaptionedClip, ModelDims, ToyCaptionModel, TrainConfig,
};
use capkit::decode::{beam_decode, greedy_decode, NextTokenModel};
use capkit::metrics::{cider, lcs_length, EvalInstance};
use capkit::scst::{mean_greedy_reward, policy_gradient, train_scst, CiderReward, RlClip, ScstConfig};
use capkit::synth::{synthetic_clips, SYNTH_SAMPLE_RATE};
use capkit::textproc::{build_vocabulary, encode, normalize_and_tokenize, SpecialTokens, TokenSequence, Vocabulary};
use capkit::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-5;
pub const ENUM_TOL: f64 = 1e-8;
pub const DFT_TOL: f64 = 1e-9;
pub const METRIC_TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn random_model(rng: &mut ChaCha8Rng, vocab: usize) -> ToyCaptionModel {
    let dims = ModelDims {
        vocab,
        embed: rng.gen_range(2..5),
        feature: rng.gen_range(2..6),
        context: rng.gen_range(2..5),
    };
    let mut m = ToyCaptionModel::new_random(dims, rng);
    // non-zero biases so the bias gradient is exercised off the origin
    let bias: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-1.0..1.0)).collect();
    m.trainable_mut()[2].copy_from_slice(&bias);
    m
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

fn log_softmax_masked(z: &[f64], allowed: impl Fn(usize) -> bool) -> Vec<f64> {
    let m = z.iter().enumerate().filter(|(i, _)| allowed(*i)).map(|(_, v)| *v).fold(f64::MIN, f64::max);
    let s: f64 = z.iter().enumerate().filter(|(i, _)| allowed(*i)).map(|(_, v)| (v - m).exp()).sum();
    let lse = m + s.ln();
    z.iter().map(|v| v - lse).collect()
}

/// Step logits recomputed through the public forward API.
fn step_logits(model: &ToyCaptionModel, pooled: &[f64], prev: u32) -> Vec<f64> {
    let ctx = model.project_context(pooled).unwrap();
    model.logits(&ctx, prev).unwrap()
}

/// Label-smoothed CE written directly from its definition.
pub fn ce_reference(model: &ToyCaptionModel, pooled: &[f64], ids: &[u32], eps: f64) -> f64 {
    let v = model.dims().vocab as f64;
    let steps = ids.len() - 1;
    let mut total = 0.0;
    for t in 0..steps {
        let lp = log_softmax_masked(&step_logits(model, pooled, ids[t]), |_| true);
        for (w, l) in lp.iter().enumerate() {
            let q = eps / v + if w == ids[t + 1] as usize { 1.0 - eps } else { 0.0 };
            total -= q * l;
        }
    }
    total / steps as f64
}

/// Log-probability of `emitted` under the decoding policy (sos blocked).
pub fn sequence_logprob(model: &ToyCaptionModel, sp: &SpecialTokens, pooled: &[f64], emitted: &[u32]) -> f64 {
    let mut prev = sp.sos;
    let mut total = 0.0;
    for &tok in emitted {
        let lp = log_softmax_masked(&step_logits(model, pooled, prev), |i| sp.is_emittable(i as u32));
        total += lp[tok as usize];
        prev = tok;
    }
    total
}

/// Central finite differences of `f` over every trainable coordinate.
pub fn fd_gradient(model: &ToyCaptionModel, h: f64, f: impl Fn(&ToyCaptionModel) -> f64) -> Vec<Vec<f64>> {
    let mut work = model.clone();
    let sizes: Vec<usize> = model.trainable().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let x0 = work.trainable()[k][i];
            work.trainable_mut()[k][i] = x0 + h;
            let up = f(&work);
            work.trainable_mut()[k][i] = x0 - h;
            let down = f(&work);
            work.trainable_mut()[k][i] = x0;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - n|| / max(||a||, ||n||)`, zero when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Worst per-tensor relative error of the CE gradient over `n` random models.
pub fn check_ce_gradients(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let sp = SpecialTokens::standard();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let vocab = r.gen_range(5..9);
        let model = random_model(&mut r, vocab);
        let pooled = random_vec(&mut r, model.dims().feature);
        let len = r.gen_range(0..5);
        let interior: Vec<u32> = (0..len).map(|_| r.gen_range(3..vocab as u32)).collect();
        let seq = TokenSequence::from_interior(&interior, &sp).unwrap();
        let eps = if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..0.3) };
        let (_, grads) = ce_loss_label_smoothed(&model, &pooled, &seq, eps).unwrap();
        let numeric = fd_gradient(&model, FD_STEP, |m| ce_reference(m, &pooled, seq.ids(), eps));
        for (a, n) in grads.tensors().iter().zip(&numeric) {
            worst = worst.max(rel_err(a, n));
        }
    }
    worst
}

/// Worst per-tensor relative error of the SCST surrogate gradient.
pub fn check_scst_gradients(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let sp = SpecialTokens::standard();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let vocab = r.gen_range(5..9);
        let model = random_model(&mut r, vocab);
        let pooled = random_vec(&mut r, model.dims().feature);
        let len = r.gen_range(1..6);
        let mut emitted: Vec<u32> = (0..len).map(|_| r.gen_range(3..vocab as u32)).collect();
        if r.gen_bool(0.5) {
            *emitted.last_mut().unwrap() = sp.eos;
        }
        let adv = r.gen_range(-2.0..2.0);
        let (_, grads) = policy_gradient(&model, &sp, &pooled, &emitted, adv).unwrap();
        let numeric = fd_gradient(&model, FD_STEP, |m| -adv * sequence_logprob(m, &sp, &pooled, &emitted));
        for (a, n) in grads.tensors().iter().zip(&numeric) {
            worst = worst.max(rel_err(a, n));
        }
    }
    worst
}

/// Every emitted sequence of a policy over `emittable` tokens with length cap
/// `max_len` (a sampled eos ends the sequence and is part of it).
pub fn enumerate_emissions(emittable: &[u32], eos: u32, max_len: usize) -> Vec<Vec<u32>> {
    let mut done = Vec::new();
    let mut live = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &live {
            for &t in emittable {
                let mut s: Vec<u32> = prefix.clone();
                s.push(t);
                if t == eos {
                    done.push(s);
                } else {
                    next.push(s);
                }
            }
        }
        live = next;
    }
    done.extend(live);
    done
}

/// Probability-weighted mean of the per-sample SCST gradients versus the
/// Richardson-extrapolated finite-difference gradient of the expected reward,
/// on a 3-token policy (eos plus two words) with length cap 2.
/// Returns the worst per-coordinate absolute error over `n` reward sets.
pub fn check_policy_gradient_enumeration(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let sp = SpecialTokens::new(0, 1);
    let emittable = [1u32, 2, 3];
    let outcomes = enumerate_emissions(&emittable, sp.eos, 2);
    assert_eq!(outcomes.len(), 7);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let model = random_model(&mut r, 4);
        let pooled = random_vec(&mut r, model.dims().feature);
        let interior = |e: &[u32]| -> Vec<u32> { e.iter().copied().filter(|&t| t != sp.eos).collect() };
        let table: HashMap<Vec<u32>, f64> = outcomes.iter().map(|e| (interior(e), r.gen_range(0.0..3.0))).collect();
        let reward = |ids: &[u32]| table[ids];

        let ctx = model.project_context(&pooled).unwrap();
        let greedy = greedy_decode(&model, &ctx, &sp, 2).unwrap();
        let baseline = reward(greedy.tokens.interior());

        let sizes: Vec<usize> = model.trainable().iter().map(|t| t.len()).collect();
        let mut expected: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        for e in &outcomes {
            let p = sequence_logprob(&model, &sp, &pooled, e).exp();
            let adv = reward(&interior(e)) - baseline;
            let (_, g) = policy_gradient(&model, &sp, &pooled, e, adv).unwrap();
            for (acc, t) in expected.iter_mut().zip(g.tensors()) {
                // the surrogate is a loss: its negative estimates the ascent direction
                acc.iter_mut().zip(t).for_each(|(a, x)| *a -= p * x);
            }
        }

        let expected_reward = |m: &ToyCaptionModel| -> f64 {
            outcomes
                .iter()
                .map(|e| sequence_logprob(m, &sp, &pooled, e).exp() * reward(&interior(e)))
                .sum()
        };
        let h = 1e-3;
        let coarse = fd_gradient(&model, h, expected_reward);
        let fine = fd_gradient(&model, h / 2.0, expected_reward);
        for (k, exp_t) in expected.iter().enumerate() {
            for (i, &e) in exp_t.iter().enumerate() {
                let richardson = (4.0 * fine[k][i] - coarse[k][i]) / 3.0;
                worst = worst.max((e - richardson).abs());
            }
        }
    }
    worst
}

/// Number of random models on which beam=1 and greedy disagree.
pub fn check_beam_one_is_greedy(n: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let sp = SpecialTokens::standard();
    let mut mismatches = 0;
    for _ in 0..n {
        let vocab = r.gen_range(5..12);
        let model = random_model(&mut r, vocab);
        let ctx = random_vec(&mut r, model.dims().context);
        let max_len = r.gen_range(1..10);
        let g = greedy_decode(&model, &ctx, &sp, max_len).unwrap();
        let b = beam_decode(&model, &ctx, &sp, 1, max_len).unwrap();
        if g.tokens != b.tokens || g.logprob.to_bits() != b.logprob.to_bits() {
            mismatches += 1;
        }
    }
    mismatches
}

/// Brute-force best emission and its policy log-probability.
pub fn exhaustive_best<M: NextTokenModel>(model: &M, ctx: &[f64], sp: &SpecialTokens, max_len: usize) -> (Vec<u32>, f64) {
    let v = model.vocab_size() as u32;
    let emittable: Vec<u32> = (0..v).filter(|&t| sp.is_emittable(t)).collect();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for e in enumerate_emissions(&emittable, sp.eos, max_len) {
        let mut prev = sp.sos;
        let mut score = 0.0;
        for &t in &e {
            let lp = model.next_token_logprobs(ctx, prev);
            let allowed = |i: usize| sp.is_emittable(i as u32);
            score += log_softmax_masked(&lp, allowed)[t as usize];
            prev = t;
        }
        if score > best.1 {
            best = (e.into_iter().filter(|&t| t != sp.eos).collect(), score);
        }
    }
    best
}

/// Beam = V^len versus exhaustive search for V <= 4 emittable tokens and
/// len <= 4. Returns (token mismatches, worst score difference).
pub fn check_beam_exhaustive(n: usize, seed: u64) -> (usize, f64) {
    let mut r = rng(seed);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        // vocab includes the blocked sos, so 2..=4 emittable tokens
        let vocab = r.gen_range(3..6);
        let sp = SpecialTokens::new(0, 1);
        let model = random_model(&mut r, vocab);
        let ctx = random_vec(&mut r, model.dims().context);
        let max_len = r.gen_range(1..5);
        let v = vocab - 1;
        let beam = v.pow(max_len as u32);
        let (tokens, score) = exhaustive_best(&model, &ctx, &sp, max_len);
        let b = beam_decode(&model, &ctx, &sp, beam, max_len).unwrap();
        if b.tokens.interior() != tokens.as_slice() {
            mismatches += 1;
        }
        worst = worst.max((b.logprob - score).abs());
    }
    (mismatches, worst)
}

/// Naive O(N^2) power spectrum.
pub fn naive_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Worst absolute error of the FFT power spectrum against the naive
/// transform for every N in 1..=max_n.
pub fn check_dft(max_n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for n in 1..=max_n {
        let frame: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fast = power_spectrum(&frame);
        for (a, b) in fast.iter().zip(naive_power(&frame)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Worst absolute error of the full log-mel path (periodic Hann window, FFT,
/// filterbank, log) against a naive recomputation with a 256-point frame.
pub fn check_log_mel_against_naive(seed: u64) -> f64 {
    let mut r = rng(seed);
    let config = MelConfig {
        sample_rate: 8000,
        n_fft: 256,
        hop: 128,
        n_mels: 20,
        ..MelConfig::default()
    };
    let audio: Vec<f64> = (0..1024).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mel = MelExtractor::new(config.clone()).unwrap().extract(&audio).unwrap();
    let (filters, _) = mel_filterbank(20, 256, 8000, 0.0, 4000.0);
    let mut worst: f64 = 0.0;
    for t in 0..mel.frames() {
        let frame: Vec<f64> = (0..256)
            .map(|i| audio[t * 128 + i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / 256.0).cos()))
            .collect();
        let power = naive_power(&frame);
        for (b, f) in filters.iter().enumerate() {
            let e: f64 = f.iter().zip(&power).map(|(w, p)| w * p).sum();
            worst = worst.max((e.max(1e-10).ln() - mel.get(t, b)).abs());
        }
    }
    worst
}

/// Exhaustive LCS by enumerating every subsequence of the shorter sentence.
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let is_subseq = |sub: &[&String]| {
        let mut it = long.iter();
        sub.iter().all(|w| it.any(|x| x == *w))
    };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if sub.len() > best && is_subseq(&sub) {
            best = sub.len();
        }
    }
    best
}

pub fn random_sentence(r: &mut ChaCha8Rng, alphabet: &[&str], min: usize, max: usize) -> Vec<String> {
    let len = r.gen_range(min..=max);
    (0..len).map(|_| alphabet[r.gen_range(0..alphabet.len())].to_string()).collect()
}

/// Pairs on which the dynamic-programming LCS disagrees with enumeration.
pub fn check_rouge_lcs(n: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let alphabet = ["a", "b", "c", "d", "e"];
    (0..n)
        .filter(|_| {
            let x = random_sentence(&mut r, &alphabet, 0, 8);
            let y = random_sentence(&mut r, &alphabet, 0, 8);
            lcs_length(&x, &y) != lcs_brute(&x, &y)
        })
        .count()
}

/// On random 3-clip single-reference corpora, the identity candidate set
/// must score at least as high as every candidate set with the same lengths
/// over the corpus alphabet. Returns (violations, worst margin by which any
/// alternative exceeded identity).
pub fn check_cider_maximality(n: usize, seed: u64) -> (usize, f64) {
    let mut r = rng(seed);
    let alphabet = ["x", "y", "z"];
    let mut violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..n {
        let refs: Vec<Vec<String>> = (0..3).map(|_| random_sentence(&mut r, &alphabet, 1, 3)).collect();
        let make = |cands: &[Vec<String>]| -> Vec<EvalInstance> {
            cands.iter().zip(&refs).map(|(c, rf)| EvalInstance::new(c.clone(), vec![rf.clone()])).collect()
        };
        let identity = cider(&make(&refs)).unwrap();
        let choices: Vec<Vec<Vec<String>>> = refs.iter().map(|rf| all_sentences(&alphabet, rf.len())).collect();
        for a in &choices[0] {
            for b in &choices[1] {
                for c in &choices[2] {
                    let s = cider(&make(&[a.clone(), b.clone(), c.clone()])).unwrap();
                    worst = worst.max(s - identity);
                    if s > identity + METRIC_TOL {
                        violations += 1;
                    }
                }
            }
        }
    }
    (violations, worst)
}

fn all_sentences(alphabet: &[&str], len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s: Vec<String>| {
                alphabet.iter().map(move |w| {
                    let mut t = s.clone();
                    t.push(w.to_string());
                    t
                })
            })
            .collect();
    }
    out
}

/// The seeded five-clip synthetic dataset, featurized and tokenized.
pub struct SynthSetup {
    pub vocab: Vocabulary,
    pub ce_clips: Vec<CaptionedClip>,
    pub rl_clips: Vec<RlClip>,
}

pub fn synth_setup(seed: u64) -> SynthSetup {
    let synth = synthetic_clips(seed);
    let config = MelConfig {
        sample_rate: SYNTH_SAMPLE_RATE,
        ..MelConfig::default()
    };
    let audio: Vec<Vec<f64>> = synth.iter().map(|c| c.audio.clone()).collect();
    let mels = log_mel_batch(&audio, &config, Execution::Sequential).unwrap();
    let tokenized: Vec<Vec<Vec<String>>> =
        synth.iter().map(|c| c.captions.iter().map(|s| normalize_and_tokenize(s)).collect()).collect();
    let vocab = build_vocabulary(&tokenized.iter().flatten().cloned().collect::<Vec<_>>());
    let ce_clips = mels
        .iter()
        .zip(&tokenized)
        .map(|(mel, caps)| CaptionedClip {
            mel: mel.clone(),
            captions: caps.iter().map(|c| encode(c, &vocab)).collect(),
        })
        .collect();
    let rl_clips = mels
        .into_iter()
        .zip(tokenized)
        .map(|(mel, references)| RlClip { mel, references })
        .collect();
    SynthSetup {
        vocab,
        ce_clips,
        rl_clips,
    }
}

pub const RL_SAMPLES_PER_CLIP: usize = 16;

/// CE pre-training (30 epochs) followed by SCST at the constant 5e-5 rate for
/// 60 epochs; returns the mean greedy reward before and after fine-tuning.
pub fn rl_improvement(seed: u64, exec: Execution) -> (f64, f64) {
    let setup = synth_setup(seed);
    let sp = SpecialTokens::standard();
    let mut r = rng(seed);
    let mut model = ToyCaptionModel::new_random(ModelDims::with_vocab(setup.vocab.len()), &mut r);
    let ce = TrainConfig {
        lr0: 1e-2,
        warmup_epochs: 2,
        decay_every: 0,
        batch: 5,
        label_eps: 0.1,
        seed,
        ..TrainConfig::default()
    };
    train_ce(&mut model, &setup.ce_clips, &ce, 30, exec).unwrap();
    let reward = CiderReward::from_clips(&setup.rl_clips, setup.vocab.clone());
    let max_len = 22;
    let before = mean_greedy_reward(&model, &setup.rl_clips, &reward, &sp, max_len, exec).unwrap();
    let cfg = ScstConfig {
        batch: 5,
        samples_per_clip: RL_SAMPLES_PER_CLIP,
        max_len,
        seed,
        ..ScstConfig::default()
    };
    train_scst(&mut model, &setup.rl_clips, &reward, &sp, &cfg, 60, exec).unwrap();
    let after = mean_greedy_reward(&model, &setup.rl_clips, &reward, &sp, max_len, exec).unwrap();
    (before, after)
}

/// (improved, unchanged, regressed) counts of `rl_improvement` over seeds.
pub fn rl_improvement_sweep(seeds: std::ops::Range<u64>, exec: Execution) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for seed in seeds {
        let (before, after) = rl_improvement(seed, exec);
        if after > before {
            counts.0 += 1;
        } else if after == before {
            counts.1 += 1;
        } else {
            counts.2 += 1;
        }
    }
    counts
}

pub fn pooled_of(clip: &CaptionedClip) -> Vec<f64> {
    pool_features(&clip.mel)
}
