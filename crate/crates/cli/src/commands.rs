//! Subcommand bodies. A run directory holds `checkpoints/model.ckpt`,
//! `vocab.txt`, `run.json`, `logs/*.jsonl` and `reports/`.

use std::path::{Path, PathBuf};

use capkit::audiofeat::{log_mel, read_wav, MelConfig, MelSpectrogram, SpecAugmentParams};
use capkit::captioner::{train_ce, CaptionedClip, ModelDims, ToyCaptionModel, TrainConfig};
use capkit::corpus::{
    align_predictions, clip_phrase_count, load_audiocaps_csv, load_clotho_csv, merge_splits, read_predictions,
    read_reference_jsonl, write_predictions, ClipRecord, DatasetSplit, Prediction, SplitName,
};
use capkit::decode::beam_decode;
use capkit::metrics::evaluate_corpus_with;
use capkit::scst::{mean_greedy_reward, train_scst, CiderReward, RlClip, ScstConfig};
use capkit::synth::write_synthetic_dataset;
use capkit::textproc::{
    build_vocabulary, decode_to_words, encode, merge_vocabularies, normalize_and_tokenize, SpecialTokens, Vocabulary,
};
use capkit::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{
    CliError, DataArgs, DecodeArgs, EvaluateArgs, Format, RefFormat, RlArgs, StatsArgs, Switch, SynthArgs, TrainArgs,
};

const BEAM_SOFT_CAP: usize = 5;

type Result<T> = std::result::Result<T, CliError>;

struct RunDir(PathBuf);

impl RunDir {
    fn create(path: &Path) -> Result<Self> {
        for sub in ["checkpoints", "logs", "reports"] {
            std::fs::create_dir_all(path.join(sub))?;
        }
        Ok(RunDir(path.to_path_buf()))
    }

    fn open(path: &Path) -> Result<Self> {
        if !path.join("checkpoints").join("model.ckpt").is_file() {
            return Err(CliError::Usage(format!("{} holds no checkpoint", path.display())));
        }
        Ok(RunDir(path.to_path_buf()))
    }

    fn checkpoint(&self) -> PathBuf {
        self.0.join("checkpoints").join("model.ckpt")
    }

    fn vocab(&self) -> PathBuf {
        self.0.join("vocab.txt")
    }

    fn log(&self, name: &str) -> PathBuf {
        self.0.join("logs").join(name)
    }

    fn report(&self, name: &str) -> PathBuf {
        self.0.join("reports").join(name)
    }

    fn load(&self) -> Result<(ToyCaptionModel, Vocabulary)> {
        let model = ToyCaptionModel::load(self.checkpoint())?;
        let vocab = Vocabulary::load(self.vocab())?;
        if model.dims().vocab != vocab.len() {
            return Err(CliError::Usage(format!(
                "{}: checkpoint vocabulary {} does not match vocab.txt ({})",
                self.0.display(),
                model.dims().vocab,
                vocab.len()
            )));
        }
        Ok((model, vocab))
    }

    fn save(&self, model: &ToyCaptionModel, vocab: &Vocabulary, settings: &serde_json::Value) -> Result<()> {
        model.save(self.checkpoint())?;
        vocab.save(self.vocab())?;
        std::fs::write(self.0.join("run.json"), serde_json::to_string_pretty(settings)? + "\n")?;
        Ok(())
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// A loaded split together with the audio directory of each record.
struct Data {
    split: DatasetSplit,
    audio_dirs: Vec<PathBuf>,
}

fn load_data(args: &DataArgs) -> Result<Data> {
    let mut merged: Option<DatasetSplit> = None;
    let mut audio_dirs = Vec::new();
    for path in &args.captions {
        let split = match args.format {
            Format::Clotho => load_clotho_csv(path, SplitName::Train)?,
            Format::Audiocaps => load_audiocaps_csv(path, SplitName::Train)?,
        };
        let dir = match &args.audio_dir {
            Some(d) => d.clone(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        audio_dirs.extend(std::iter::repeat_n(dir, split.len()));
        merged = Some(match merged {
            Some(acc) => merge_splits(&acc, &split)?,
            None => split,
        });
    }
    let split = merged.ok_or_else(|| CliError::Usage("no caption files given".into()))?;
    Ok(Data { split, audio_dirs })
}

fn record_audio(rec: &ClipRecord, dir: &Path) -> PathBuf {
    dir.join(rec.audio_path.as_deref().unwrap_or(&rec.id))
}

/// Reads every clip's audio and computes its log-mel spectrogram at the
/// file's own sample rate.
fn features(data: &Data, exec: Execution) -> Result<Vec<MelSpectrogram>> {
    let jobs: Vec<PathBuf> = data
        .split
        .records()
        .iter()
        .zip(&data.audio_dirs)
        .map(|(rec, dir)| record_audio(rec, dir))
        .collect();
    let config = MelConfig::default();
    exec.map(&jobs, |path| -> Result<MelSpectrogram> {
        let (audio, sr) = read_wav(path)?;
        Ok(log_mel(&audio, sr, &config)?)
    })
    .into_iter()
    .collect()
}

fn tokenized(split: &DatasetSplit) -> Vec<Vec<Vec<String>>> {
    split
        .records()
        .iter()
        .map(|r| r.captions.iter().map(|c| normalize_and_tokenize(c)).collect())
        .collect()
}

fn check_features(model: &ToyCaptionModel) -> Result<()> {
    let bins = MelConfig::default().n_mels;
    if model.dims().feature != bins {
        return Err(CliError::Usage(format!(
            "model expects {} input features, the front end produces {bins}",
            model.dims().feature
        )));
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let csv = write_synthetic_dataset(&args.out, args.seed)?;
    println!("{}", csv.display());
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let clips = tokenized(&data.split);
    let all: Vec<Vec<String>> = clips.iter().flatten().cloned().collect();
    let vocab = build_vocabulary(&all);
    let phrase = normalize_and_tokenize(&args.phrase);
    println!("clips: {}", clips.len());
    println!("captions: {}", all.len());
    println!("vocabulary: {}", vocab.content_len());
    println!("phrase \"{}\": {} clips", phrase.join(" "), clip_phrase_count(&clips, &phrase));
    Ok(())
}

pub fn train(args: &TrainArgs, exec: Execution) -> Result<()> {
    let cfg_probe = TrainConfig {
        lr0: args.lr,
        warmup_epochs: args.warmup,
        decay_every: args.decay_every,
        batch: args.batch,
        label_eps: args.eps_label_smoothing,
        spec_augment: (args.spec_augment == Switch::On).then(SpecAugmentParams::default),
        ..TrainConfig::default()
    };
    cfg_probe.validate()?;
    let data = load_data(&args.data)?;
    let mels = features(&data, exec)?;
    let caps = tokenized(&data.split);
    let all: Vec<Vec<String>> = caps.iter().flatten().cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut model, vocab) = match &args.init_from {
        Some(dir) => {
            let (mut model, base) = RunDir::open(dir)?.load()?;
            let vocab = merge_vocabularies(&base, &build_vocabulary(&all));
            model.extend_vocab(vocab.len(), &mut rng)?;
            (model, vocab)
        }
        None => {
            let vocab = build_vocabulary(&all);
            let dims = ModelDims {
                vocab: vocab.len(),
                embed: args.embed_dim,
                feature: MelConfig::default().n_mels,
                context: args.context_dim,
            };
            (ToyCaptionModel::new_random(dims, &mut rng), vocab)
        }
    };
    check_features(&model)?;
    let clips: Vec<CaptionedClip> = mels
        .into_iter()
        .zip(&caps)
        .map(|(mel, c)| CaptionedClip {
            mel,
            captions: c.iter().map(|w| encode(w, &vocab)).collect(),
        })
        .collect();
    let cfg = TrainConfig {
        seed: rng.gen(),
        ..cfg_probe
    };
    let log = train_ce(&mut model, &clips, &cfg, args.epochs, exec)?;

    let run = RunDir::create(&args.run_dir)?;
    let settings = json!({
        "command": "train",
        "captions": args.data.captions,
        "init_from": args.init_from,
        "epochs": args.epochs,
        "lr": args.lr,
        "warmup": args.warmup,
        "decay_every": args.decay_every,
        "batch": args.batch,
        "eps_label_smoothing": args.eps_label_smoothing,
        "spec_augment": args.spec_augment == Switch::On,
        "seed": args.seed,
        "dims": {
            "vocab": model.dims().vocab,
            "embed": model.dims().embed,
            "feature": model.dims().feature,
            "context": model.dims().context,
        },
    });
    run.save(&model, &vocab, &settings)?;
    write_jsonl(&run.log("train.jsonl"), &log)?;
    let last = log.last().map_or(f64::NAN, |e| e.mean_loss);
    println!(
        "clips {} captions {} vocabulary {} epochs {} final loss {last:.4}",
        clips.len(),
        all.len(),
        vocab.content_len(),
        log.len()
    );
    Ok(())
}

pub fn rl_finetune(args: &RlArgs, exec: Execution) -> Result<()> {
    if !(args.lr > 0.0 && args.lr.is_finite()) || args.batch == 0 || args.samples_per_clip == 0 || args.max_len == 0 {
        return Err(CliError::Usage(
            "lr must be positive and batch, samples-per-clip and max-len nonzero".into(),
        ));
    }
    let (mut model, vocab) = RunDir::open(&args.init_from)?.load()?;
    check_features(&model)?;
    let data = load_data(&args.data)?;
    let mels = features(&data, exec)?;
    let clips: Vec<RlClip> = mels
        .into_iter()
        .zip(tokenized(&data.split))
        .map(|(mel, references)| RlClip { mel, references })
        .collect();
    let reward = CiderReward::from_clips(&clips, vocab.clone());
    let specials = SpecialTokens::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cfg = ScstConfig {
        lr: args.lr,
        batch: args.batch,
        samples_per_clip: args.samples_per_clip,
        max_len: args.max_len,
        seed: rng.gen(),
        ..ScstConfig::default()
    };
    let before = mean_greedy_reward(&model, &clips, &reward, &specials, args.max_len, exec)?;
    let log = train_scst(&mut model, &clips, &reward, &specials, &cfg, args.epochs, exec)?;
    let after = mean_greedy_reward(&model, &clips, &reward, &specials, args.max_len, exec)?;

    let run = RunDir::create(&args.run_dir)?;
    let settings = json!({
        "command": "rl-finetune",
        "captions": args.data.captions,
        "init_from": args.init_from,
        "reward": "cider",
        "epochs": args.epochs,
        "lr": args.lr,
        "batch": args.batch,
        "samples_per_clip": args.samples_per_clip,
        "max_len": args.max_len,
        "seed": args.seed,
    });
    run.save(&model, &vocab, &settings)?;
    write_jsonl(&run.log("rl.jsonl"), &log)?;
    println!("greedy reward {before:.4} -> {after:.4} over {} epochs", log.len());
    Ok(())
}

pub fn decode(args: &DecodeArgs, exec: Execution) -> Result<()> {
    if args.beam > BEAM_SOFT_CAP {
        eprintln!("capkit decode: beam {} is above the usual cap of {BEAM_SOFT_CAP}", args.beam);
    }
    let run = RunDir::open(&args.run_dir)?;
    let (model, vocab) = run.load()?;
    check_features(&model)?;
    let data = load_data(&args.data)?;
    let mels = features(&data, exec)?;
    let specials = SpecialTokens::standard();
    let captions = exec.map(&mels, |mel| -> Result<String> {
        let ctx = model.encode_context(mel)?;
        let d = beam_decode(&model, &ctx, &specials, args.beam, args.max_len)?;
        Ok(decode_to_words(&d.tokens, &vocab)?.join(" "))
    });
    let mut preds = Vec::with_capacity(mels.len());
    for (rec, caption) in data.split.records().iter().zip(captions) {
        preds.push(Prediction {
            id: rec.id.clone(),
            caption: caption?,
        });
    }
    let out = match &args.output {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(run.0.join("reports"))?;
            run.report("predictions.jsonl")
        }
    };
    write_predictions(&preds, &out)?;
    println!("{} predictions written to {}", preds.len(), out.display());
    Ok(())
}

fn read_spice(path: &Path) -> Result<f64> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    value
        .as_f64()
        .or_else(|| value.get("corpus").and_then(serde_json::Value::as_f64))
        .ok_or_else(|| CliError::Usage(format!("{}: expected a number or {{\"corpus\": number}}", path.display())))
}

pub fn evaluate(args: &EvaluateArgs, exec: Execution) -> Result<()> {
    let preds = read_predictions(&args.predictions)?;
    let format = match args.references_format {
        RefFormat::Auto => match args.references.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => RefFormat::Jsonl,
            _ => RefFormat::Clotho,
        },
        f => f,
    };
    let refs = match format {
        RefFormat::Jsonl => read_reference_jsonl(&args.references, SplitName::Eval)?,
        RefFormat::Audiocaps => load_audiocaps_csv(&args.references, SplitName::Eval)?,
        RefFormat::Clotho | RefFormat::Auto => load_clotho_csv(&args.references, SplitName::Eval)?,
    };
    let instances = align_predictions(&preds, &refs)?;
    let spice = args.spice.as_deref().map(read_spice).transpose()?;
    let report = evaluate_corpus_with(&instances, spice, exec)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &args.output {
        if out.extension().is_some_and(|e| e == "json") {
            std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        } else {
            std::fs::write(out, &text)?;
        }
    }
    Ok(())
}
