//! A tiny seeded dataset of synthetic sounds with five captions each, used by
//! tests, benchmarks and the command-line demo.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audiofeat::write_wav_f32;
use crate::corpus::{save_clotho_csv, ClipRecord, DatasetSplit, SplitName};
use crate::Result;

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
pub const SYNTH_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub audio: Vec<f64>,
    pub captions: Vec<String>,
}

const CLIPS: [(&str, [&str; 5]); 5] = [
    (
        "low_hum",
        [
            "a low hum plays steadily",
            "a steady low hum",
            "a low tone hums steadily",
            "a low hum in the background",
            "low humming sound plays",
        ],
    ),
    (
        "high_beep",
        [
            "a high pitched beep sounds",
            "a high beep rings",
            "a loud high pitched beep",
            "a high tone rings out",
            "a beep sounds in the background",
        ],
    ),
    (
        "static",
        [
            "static noise hisses loudly",
            "loud static hisses",
            "white noise hisses",
            "a hissing static noise",
            "static hiss plays",
        ],
    ),
    (
        "whistle",
        [
            "a whistle rises in pitch",
            "a rising whistle sweeps up",
            "a whistle sweeps upward",
            "the pitch of a whistle rises",
            "a rising tone whistles",
        ],
    ),
    (
        "pulses",
        [
            "a beep repeats several times",
            "short beeps repeat",
            "a tone pulses on and off",
            "several short beeps",
            "beeps repeat quickly",
        ],
    ),
];

fn render(kind: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(SYNTH_SAMPLE_RATE);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let jitter = 0.01 * (rng.gen::<f64>() - 0.5);
            let s = match kind {
                0 => 0.5 * (2.0 * PI * 300.0 * t).sin(),
                1 => 0.5 * (2.0 * PI * 3000.0 * t).sin(),
                2 => rng.gen::<f64>() - 0.5,
                // linear sweep 500 Hz -> 4 kHz over the clip
                3 => 0.5 * (2.0 * PI * (500.0 * t + 1750.0 * t * t / SYNTH_SECONDS)).sin(),
                _ => {
                    let gate = if (t * 4.0).fract() < 0.5 { 1.0 } else { 0.0 };
                    0.5 * gate * (2.0 * PI * 1000.0 * t).sin()
                }
            };
            s + jitter
        })
        .collect()
}

/// Five one-second clips (hum, beep, static, rising whistle, pulses).
pub fn synthetic_clips(seed: u64) -> Vec<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (f64::from(SYNTH_SAMPLE_RATE) * SYNTH_SECONDS) as usize;
    CLIPS
        .iter()
        .enumerate()
        .map(|(k, (id, caps))| SynthClip {
            id: format!("{id}.wav"),
            audio: render(k, n, &mut rng),
            captions: caps.iter().map(|c| c.to_string()).collect(),
        })
        .collect()
}

pub fn synthetic_split(clips: &[SynthClip]) -> DatasetSplit {
    let records = clips
        .iter()
        .map(|c| ClipRecord {
            id: c.id.clone(),
            audio_path: Some(c.id.clone()),
            captions: c.captions.clone(),
        })
        .collect();
    DatasetSplit::new(SplitName::Train, records).expect("synthetic ids are unique")
}

/// Writes `<id>.wav` files and `captions.csv` into `dir`; returns the CSV path.
pub fn write_synthetic_dataset(dir: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(crate::audiofeat::AudioError::from)?;
    let clips = synthetic_clips(seed);
    for c in &clips {
        write_wav_f32(dir.join(&c.id), &c.audio, SYNTH_SAMPLE_RATE)?;
    }
    let csv = dir.join("captions.csv");
    save_clotho_csv(&synthetic_split(&clips), &csv)?;
    Ok(csv)
}
