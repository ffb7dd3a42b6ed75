//! Log-mel spectrogram extraction and SpecAugment masking.

mod augment;
mod io;
mod mel;

use thiserror::Error;

pub use augment::{mask_frequency, mask_time, spec_augment, spec_augment_with_rng, SpecAugmentParams};
pub use io::{read_wav, write_wav_f32, write_wav_i16};
pub use mel::{
    hz_to_mel, log_mel, log_mel_batch, mel_filterbank, mel_to_hz, power_spectrum, MelConfig,
    MelExtractor,
};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio has {len} samples, shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask out of bounds: {0}")]
    MaskOutOfBounds(String),
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
    #[error("malformed spectrogram file: {0}")]
    MalformedFile(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Time x frequency matrix of log-mel energies, stored row-major (one row per
/// frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    bins: usize,
    values: Vec<f64>,
    pub sample_rate: u32,
    pub hop: u32,
}

const MAGIC: &[u8; 4] = b"LMEL";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

impl MelSpectrogram {
    pub fn from_values(
        frames: usize,
        bins: usize,
        values: Vec<f64>,
        sample_rate: u32,
        hop: u32,
    ) -> Result<Self, AudioError> {
        if frames == 0 || bins == 0 || values.len() != frames * bins {
            return Err(AudioError::InvalidConfig(format!(
                "{} values do not fill a {frames}x{bins} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(AudioError::InvalidConfig(format!("non-finite value {v}")));
        }
        Ok(MelSpectrogram {
            frames,
            bins,
            values,
            sample_rate,
            hop,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over frames: one value per mel bin.
    pub fn time_mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.bins];
        for row in self.values.chunks_exact(self.bins) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let t = self.frames as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        acc
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Binary layout: `LMEL`, then little-endian u32 version, frames, bins,
    /// sample rate, hop, followed by `frames * bins` little-endian f64 values
    /// in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for x in [
            FORMAT_VERSION,
            self.frames as u32,
            self.bins as u32,
            self.sample_rate,
            self.hop,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AudioError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(AudioError::MalformedFile("missing LMEL header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != FORMAT_VERSION {
            return Err(AudioError::MalformedFile(format!("unknown version {}", word(0))));
        }
        let (frames, bins) = (word(1) as usize, word(2) as usize);
        let body = &bytes[HEADER_LEN..];
        if body.len() != frames * bins * 8 {
            return Err(AudioError::MalformedFile(format!(
                "expected {} value bytes, found {}",
                frames * bins * 8,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_values(frames, bins, values, word(3), word(4))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AudioError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AudioError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
