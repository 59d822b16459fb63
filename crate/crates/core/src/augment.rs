//! Training-time augmentation: fixed-length cropping/tiling, circular random
//! shift of the waveform, and time/frequency feature masking. Every draw is a
//! pure function of the supplied seed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::features::FeatureMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub segment_sec: f64,
    pub max_shift_sec: f64,
    pub time_masks: usize,
    pub max_time_mask: usize,
    pub freq_masks: usize,
    pub max_freq_mask: usize,
    pub mask_value: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            segment_sec: 4.0,
            max_shift_sec: 1.0,
            time_masks: 2,
            max_time_mask: 20,
            freq_masks: 2,
            max_freq_mask: 8,
            mask_value: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn segment_samples(&self, rate: u32) -> usize {
        (self.segment_sec * rate as f64).round() as usize
    }

    pub fn max_shift_samples(&self, rate: u32) -> usize {
        (self.max_shift_sec * rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.max_shift_sec >= 0.0 && self.max_shift_sec <= self.segment_sec) {
            return Err(AugmentError::BadConfig(format!(
                "need 0 <= max_shift_sec <= segment_sec, got shift {} segment {}",
                self.max_shift_sec, self.segment_sec
            )));
        }
        if self.segment_sec <= 0.0 {
            return Err(AugmentError::BadConfig(
                "segment_sec must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum AugmentError {
    BadConfig(String),
    /// random_shift requires the clip to already be at segment length.
    LengthMismatch {
        len: usize,
        expected: usize,
    },
    EmptyClip,
}

impl fmt::Display for AugmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentError::BadConfig(why) => write!(f, "bad augment config: {why}"),
            AugmentError::LengthMismatch { len, expected } => {
                write!(
                    f,
                    "clip has {len} samples, expected segment length {expected}"
                )
            }
            AugmentError::EmptyClip => write!(f, "clip is empty"),
        }
    }
}

impl std::error::Error for AugmentError {}

/// How a too-long clip is cropped by [`fix_length`].
#[derive(Debug, Clone, Copy)]
pub enum CropMode {
    /// Evaluation: always crop from sample 0.
    Start,
    /// Training: crop from a seeded random offset.
    Random { seed: u64 },
}

/// Forces a clip to exactly `round(segment_sec * rate)` samples. Longer
/// clips are cropped per `mode`; shorter clips are cyclically tiled.
pub fn fix_length(
    clip: &AudioClip,
    segment_sec: f64,
    mode: CropMode,
) -> Result<AudioClip, AugmentError> {
    if clip.is_empty() {
        return Err(AugmentError::EmptyClip);
    }
    let target = (segment_sec * clip.sample_rate as f64).round() as usize;
    let n = clip.len();
    let samples = if n == target {
        clip.samples.clone()
    } else if n > target {
        let start = match mode {
            CropMode::Start => 0,
            CropMode::Random { seed } => Rng::new(seed).below(n - target + 1),
        };
        clip.samples[start..start + target].to_vec()
    } else {
        (0..target).map(|i| clip.samples[i % n]).collect()
    };
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Circular shift by a seeded draw from `[-max_shift, +max_shift]` samples.
/// The sample multiset is unchanged.
pub fn random_shift(
    clip: &AudioClip,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<AudioClip, AugmentError> {
    cfg.validate()?;
    let expected = cfg.segment_samples(clip.sample_rate);
    if clip.len() != expected {
        return Err(AugmentError::LengthMismatch {
            len: clip.len(),
            expected,
        });
    }
    let max_shift = cfg.max_shift_samples(clip.sample_rate) as i64;
    let shift = Rng::new(seed).range_inclusive(-max_shift, max_shift);
    Ok(shift_circular(clip, shift))
}

/// Circular shift by a fixed amount; positive shifts move content right.
pub fn shift_circular(clip: &AudioClip, shift: i64) -> AudioClip {
    let n = clip.len() as i64;
    if n == 0 {
        return clip.clone();
    }
    let samples = (0..n)
        .map(|i| clip.samples[(i - shift).rem_euclid(n) as usize])
        .collect();
    AudioClip::new(samples, clip.sample_rate)
}

/// SpecAugment-style masking: seeded time stripes and frequency stripes set
/// to `mask_value`; everything else untouched.
pub fn feature_mask(features: &FeatureMatrix, cfg: &AugmentConfig, seed: u64) -> FeatureMatrix {
    let mut out = features.clone();
    let mut rng = Rng::new(seed);
    let t = features.frames;
    let f = features.bins;
    for _ in 0..cfg.time_masks {
        let width = rng.range_inclusive(0, cfg.max_time_mask.min(t) as i64) as usize;
        let start = rng.below(t - width + 1);
        for row in start..start + width {
            for col in 0..f {
                out.data[row * f + col] = cfg.mask_value;
            }
        }
    }
    for _ in 0..cfg.freq_masks {
        let width = rng.range_inclusive(0, cfg.max_freq_mask.min(f) as i64) as usize;
        let start = rng.below(f - width + 1);
        for row in 0..t {
            for col in start..start + width {
                out.data[row * f + col] = cfg.mask_value;
            }
        }
    }
    out
}
