use std::hint::black_box;

use capkit::audiofeat::{log_mel_batch, MelConfig};
use capkit::captioner::{ModelDims, ToyCaptionModel};
use capkit::metrics::{evaluate_corpus_with, EvalInstance};
use capkit::scst::{train_scst, CiderReward, RlClip, ScstConfig};
use capkit::synth::{synthetic_clips, SYNTH_SAMPLE_RATE};
use capkit::textproc::{build_vocabulary, normalize_and_tokenize, SpecialTokens};
use capkit::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random_corpus(n: usize, seed: u64) -> Vec<EvalInstance> {
    let words = ["a", "dog", "barks", "in", "the", "background", "rain", "falls", "loudly", "car", "passes", "by"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(4..14);
        (0..len).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
    };
    (0..n)
        .map(|_| {
            let cand = sentence(&mut rng);
            let refs = (0..5).map(|_| sentence(&mut rng)).collect();
            EvalInstance::new(cand, refs)
        })
        .collect()
}

fn metrics(c: &mut Criterion) {
    let corpus = random_corpus(1000, 7);
    let mut group = c.benchmark_group("evaluate_corpus");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate_corpus_with(black_box(&corpus), None, exec).unwrap())
        });
    }
    group.finish();
}

fn features(c: &mut Criterion) {
    let audio: Vec<Vec<f64>> = (0..8).flat_map(|s| synthetic_clips(s).into_iter().map(|c| c.audio)).collect();
    let config = MelConfig {
        sample_rate: SYNTH_SAMPLE_RATE,
        ..MelConfig::default()
    };
    let mut group = c.benchmark_group("log_mel_batch");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| log_mel_batch(black_box(&audio), &config, exec).unwrap())
        });
    }
    group.finish();
}

fn scst(c: &mut Criterion) {
    let config = MelConfig {
        sample_rate: SYNTH_SAMPLE_RATE,
        ..MelConfig::default()
    };
    let synth = synthetic_clips(0);
    let audio: Vec<Vec<f64>> = synth.iter().map(|c| c.audio.clone()).collect();
    let mels = log_mel_batch(&audio, &config, Execution::Sequential).unwrap();
    let clips: Vec<RlClip> = synth
        .iter()
        .zip(mels)
        .map(|(s, mel)| RlClip {
            mel,
            references: s.captions.iter().map(|c| normalize_and_tokenize(c)).collect(),
        })
        .collect();
    let vocab = build_vocabulary(&clips.iter().flat_map(|c| c.references.clone()).collect::<Vec<_>>());
    let reward = CiderReward::from_clips(&clips, vocab.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = ToyCaptionModel::new_random(ModelDims::with_vocab(vocab.len()), &mut rng);
    let cfg = ScstConfig::default();
    let mut group = c.benchmark_group("train_scst_epoch");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let mut m = model.clone();
                train_scst(&mut m, &clips, &reward, &SpecialTokens::standard(), &cfg, 1, exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, metrics, features, scst);
criterion_main!(benches);
