use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioError, MelSpectrogram};
use crate::exec::Execution;

/// Log-mel front end settings. Defaults: 44.1 kHz, 1024-point periodic Hann
/// window, hop 512, 64 HTK-scale mel bands from 0 Hz to Nyquist, log floor 1e-10.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 44_100,
            n_fft: 1024,
            hop: 512,
            n_mels: 64,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK mel filters (`n_mels` rows of `n_fft / 2 + 1` weights,
/// peak 1, no area normalization), plus the centre frequency of each filter.
pub fn mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    let filters = (0..n_mels)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - left) / (centre - left);
                    let down = (right - f) / (right - centre);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect();
    (filters, edges[1..=n_mels].to_vec())
}

/// Reusable log-mel extractor: window, FFT plan and filterbank are built once.
pub struct MelExtractor {
    config: MelConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    centres: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelExtractor {
    pub fn new(config: MelConfig) -> Result<Self, AudioError> {
        if config.sample_rate == 0 {
            return Err(AudioError::InvalidConfig("sample rate must be positive".into()));
        }
        if config.n_fft < 2 || config.hop == 0 || config.n_mels == 0 {
            return Err(AudioError::InvalidConfig(format!(
                "n_fft {}, hop {}, n_mels {}",
                config.n_fft, config.hop, config.n_mels
            )));
        }
        let nyquist = f64::from(config.sample_rate) / 2.0;
        let f_max = config.f_max.unwrap_or(nyquist);
        if !(0.0 <= config.f_min && config.f_min < f_max && f_max <= nyquist) {
            return Err(AudioError::InvalidConfig(format!(
                "frequency range {}..{f_max} Hz",
                config.f_min
            )));
        }
        let n = config.n_fft;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        let (filters, centres) =
            mel_filterbank(config.n_mels, n, config.sample_rate, config.f_min, f_max);
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(MelExtractor {
            config,
            window,
            filters,
            centres,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    /// Centre frequency in Hz of each mel filter.
    pub fn centre_frequencies(&self) -> &[f64] {
        &self.centres
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.config.n_fft {
            0
        } else {
            1 + (len - self.config.n_fft) / self.config.hop
        }
    }

    pub fn extract(&self, audio: &[f64]) -> Result<MelSpectrogram, AudioError> {
        let n = self.config.n_fft;
        let frames = self.num_frames(audio.len());
        if frames == 0 {
            return Err(AudioError::TooShort {
                len: audio.len(),
                window: n,
            });
        }
        let n_mels = self.config.n_mels;
        let mut values = Vec::with_capacity(frames * n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.config.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(audio[start + i] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            let power: Vec<f64> = buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
            for filter in &self.filters {
                let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                values.push(energy.max(self.config.log_floor).ln());
            }
        }
        MelSpectrogram::from_values(
            frames,
            n_mels,
            values,
            self.config.sample_rate,
            self.config.hop as u32,
        )
    }
}

/// Power spectrum `|X_k|^2` for `k = 0..=N/2` of a real frame (no window).
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Log-mel spectrogram of mono `audio` sampled at `sample_rate` Hz. The
/// sample rate overrides `config.sample_rate`.
pub fn log_mel(audio: &[f64], sample_rate: u32, config: &MelConfig) -> Result<MelSpectrogram, AudioError> {
    let config = MelConfig {
        sample_rate,
        ..config.clone()
    };
    MelExtractor::new(config)?.extract(audio)
}

/// Extracts many clips that share one sample rate.
pub fn log_mel_batch(
    clips: &[Vec<f64>],
    config: &MelConfig,
    exec: Execution,
) -> Result<Vec<MelSpectrogram>, AudioError> {
    let extractor = MelExtractor::new(config.clone())?;
    exec.map(clips, |clip| extractor.extract(clip))
        .into_iter()
        .collect()
}
