use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioError, MelSpectrogram};

/// SpecAugment settings. Mask widths are drawn uniformly from `0..=max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecAugmentParams {
    pub freq_masks: usize,
    pub max_freq_width: usize,
    pub time_masks: usize,
    /// `None` uses 10% of the frame count.
    pub max_time_width: Option<usize>,
}

impl Default for SpecAugmentParams {
    fn default() -> Self {
        SpecAugmentParams {
            freq_masks: 2,
            max_freq_width: 8,
            time_masks: 2,
            max_time_width: None,
        }
    }
}

impl SpecAugmentParams {
    pub fn none() -> Self {
        SpecAugmentParams {
            freq_masks: 0,
            max_freq_width: 0,
            time_masks: 0,
            max_time_width: Some(0),
        }
    }

    fn time_width(&self, frames: usize) -> usize {
        self.max_time_width.unwrap_or(frames / 10)
    }
}

fn fill_bins(m: &mut MelSpectrogram, start: usize, width: usize, fill: f64) {
    let bins = m.bins();
    for row in m.values_mut().chunks_exact_mut(bins) {
        row[start..start + width].fill(fill);
    }
}

fn fill_frames(m: &mut MelSpectrogram, start: usize, width: usize, fill: f64) {
    let bins = m.bins();
    m.values_mut()[start * bins..(start + width) * bins].fill(fill);
}

/// Sets mel bins `start..start + width` of every frame to the spectrogram mean.
pub fn mask_frequency(m: &MelSpectrogram, start: usize, width: usize) -> Result<MelSpectrogram, AudioError> {
    if start + width > m.bins() {
        return Err(AudioError::MaskOutOfBounds(format!(
            "bins {start}..{} of {}",
            start + width,
            m.bins()
        )));
    }
    let mut out = m.clone();
    fill_bins(&mut out, start, width, m.mean());
    Ok(out)
}

/// Sets frames `start..start + width` to the spectrogram mean.
pub fn mask_time(m: &MelSpectrogram, start: usize, width: usize) -> Result<MelSpectrogram, AudioError> {
    if start + width > m.frames() {
        return Err(AudioError::MaskOutOfBounds(format!(
            "frames {start}..{} of {}",
            start + width,
            m.frames()
        )));
    }
    let mut out = m.clone();
    fill_frames(&mut out, start, width, m.mean());
    Ok(out)
}

pub fn spec_augment(m: &MelSpectrogram, params: &SpecAugmentParams, seed: u64) -> Result<MelSpectrogram, AudioError> {
    spec_augment_with_rng(m, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Applies the frequency masks, then the time masks. Masked cells take the
/// mean of the input spectrogram.
pub fn spec_augment_with_rng<R: Rng + ?Sized>(
    m: &MelSpectrogram,
    params: &SpecAugmentParams,
    rng: &mut R,
) -> Result<MelSpectrogram, AudioError> {
    let max_t = params.time_width(m.frames());
    if params.max_freq_width >= m.bins() {
        return Err(AudioError::MaskOutOfBounds(format!(
            "max frequency width {} >= {} bins",
            params.max_freq_width,
            m.bins()
        )));
    }
    if max_t >= m.frames() {
        return Err(AudioError::MaskOutOfBounds(format!(
            "max time width {max_t} >= {} frames",
            m.frames()
        )));
    }
    let fill = m.mean();
    let mut out = m.clone();
    for _ in 0..params.freq_masks {
        let width = rng.gen_range(0..=params.max_freq_width);
        let start = rng.gen_range(0..=m.bins() - width);
        fill_bins(&mut out, start, width, fill);
    }
    for _ in 0..params.time_masks {
        let width = rng.gen_range(0..=max_t);
        let start = rng.gen_range(0..=m.frames() - width);
        fill_frames(&mut out, start, width, fill);
    }
    Ok(out)
}
