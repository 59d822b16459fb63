//! Cough-activity segmentation: peak normalization, short-time energy,
//! onset/offset detection, and extraction of the cough-active spans.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;

/// Segmentation parameters. The defaults are the operating point the rest of
/// the pipeline assumes: 22.5 ms windows with 11.25 ms hops, onset threshold
/// 14.5 and offset threshold 0.1 on the peak-normalized signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub onset_threshold: f64,
    pub offset_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window_ms: 22.5,
            hop_ms: 11.25,
            onset_threshold: 14.5,
            offset_threshold: 0.1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.window_ms > 0.0 && self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return Err(PreprocessError::BadConfig(format!(
                "need 0 < hop_ms <= window_ms, got hop {} window {}",
                self.hop_ms, self.window_ms
            )));
        }
        if !(self.onset_threshold > self.offset_threshold && self.offset_threshold > 0.0) {
            return Err(PreprocessError::BadConfig(format!(
                "need onset > offset > 0, got onset {} offset {}",
                self.onset_threshold, self.offset_threshold
            )));
        }
        Ok(())
    }

    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }
}

#[derive(Debug)]
pub enum PreprocessError {
    EmptyClip,
    /// Clip shorter than one analysis window.
    TooShort {
        len: usize,
        window: usize,
    },
    /// No regions to extract.
    EmptyRegions,
    BadConfig(String),
    BadRegion(String),
}

impl fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreprocessError::EmptyClip => write!(f, "clip is empty"),
            PreprocessError::TooShort { len, window } => {
                write!(
                    f,
                    "clip of {len} samples is shorter than one {window}-sample window"
                )
            }
            PreprocessError::EmptyRegions => write!(f, "no regions to extract"),
            PreprocessError::BadConfig(why) => write!(f, "bad preprocess config: {why}"),
            PreprocessError::BadRegion(why) => write!(f, "invalid region: {why}"),
        }
    }
}

impl std::error::Error for PreprocessError {}

/// Per-frame short-time energy series.
#[derive(Debug, Clone)]
pub struct SteSeries {
    pub values: Vec<f64>,
    pub window_len: usize,
    pub hop_len: usize,
}

/// Half-open sample interval covering one detected cough burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoughRegion {
    pub start_sample: usize,
    pub end_sample: usize,
}

impl CoughRegion {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

/// Scales the clip so its peak magnitude is exactly 1.
///
/// Returns the scaled clip and a flag that is true when the input was all
/// zeros (in which case the clip is returned unchanged).
pub fn normalize_peak(clip: &AudioClip) -> Result<(AudioClip, bool), PreprocessError> {
    if clip.is_empty() {
        return Err(PreprocessError::EmptyClip);
    }
    let peak = clip.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak == 0.0 {
        return Ok((clip.clone(), true));
    }
    let scaled = clip.samples.iter().map(|&s| s / peak).collect();
    Ok((AudioClip::new(scaled, clip.sample_rate), false))
}

/// Windowed sum of squares with a rectangular window and no padding; the
/// trailing partial frame is dropped.
pub fn short_time_energy(
    clip: &AudioClip,
    cfg: &PreprocessConfig,
) -> Result<SteSeries, PreprocessError> {
    cfg.validate()?;
    let window = cfg.window_samples(clip.sample_rate);
    let hop = cfg.hop_samples(clip.sample_rate);
    if clip.len() < window {
        return Err(PreprocessError::TooShort {
            len: clip.len(),
            window,
        });
    }
    let frames = (clip.len() - window) / hop + 1;
    let mut values = Vec::with_capacity(frames);
    for k in 0..frames {
        let start = k * hop;
        let sum: f64 = clip.samples[start..start + window]
            .iter()
            .map(|&x| x * x)
            .sum();
        values.push(sum);
    }
    Ok(SteSeries {
        values,
        window_len: window,
        hop_len: hop,
    })
}

/// Onset/offset scan over an STE series.
///
/// An onset is a frame whose STE strictly exceeds the onset threshold where
/// the previous frame did not. Its offset is the last frame before the next
/// onset (or before the series end) whose STE strictly exceeds the offset
/// threshold. Each region spans `[onset_frame * hop, offset_frame * hop +
/// window)` clamped to the signal, and overlapping regions are merged.
pub fn detect_cough_regions(
    ste: &SteSeries,
    cfg: &PreprocessConfig,
    signal_len: usize,
) -> Vec<CoughRegion> {
    let v = &ste.values;
    let mut onsets = Vec::new();
    for k in 0..v.len() {
        if v[k] > cfg.onset_threshold && (k == 0 || v[k - 1] <= cfg.onset_threshold) {
            onsets.push(k);
        }
    }
    if onsets.is_empty() {
        return Vec::new();
    }

    let mut regions: Vec<CoughRegion> = Vec::with_capacity(onsets.len());
    for (i, &onset) in onsets.iter().enumerate() {
        let scan_end = if i + 1 < onsets.len() {
            onsets[i + 1]
        } else {
            v.len()
        };
        // The onset frame itself exceeds the (larger) onset threshold, so a
        // qualifying offset frame always exists in [onset, scan_end).
        let mut offset = onset;
        for (j, &value) in v.iter().enumerate().take(scan_end).skip(onset) {
            if value > cfg.offset_threshold {
                offset = j;
            }
        }
        let start = onset * ste.hop_len;
        let end = (offset * ste.hop_len + ste.window_len).min(signal_len);
        if end <= start {
            continue;
        }
        match regions.last_mut() {
            Some(prev) if start < prev.end_sample => {
                prev.end_sample = prev.end_sample.max(end);
            }
            _ => regions.push(CoughRegion {
                start_sample: start,
                end_sample: end,
            }),
        }
    }
    regions
}

/// Concatenates the region spans of the clip in order.
pub fn extract_cough_signal(
    clip: &AudioClip,
    regions: &[CoughRegion],
) -> Result<AudioClip, PreprocessError> {
    if regions.is_empty() {
        return Err(PreprocessError::EmptyRegions);
    }
    let total: usize = regions.iter().map(|r| r.len()).sum();
    let mut samples = Vec::with_capacity(total);
    for r in regions {
        if r.end_sample > clip.len() || r.is_empty() {
            return Err(PreprocessError::BadRegion(format!(
                "[{}, {}) against clip of {} samples",
                r.start_sample,
                r.end_sample,
                clip.len()
            )));
        }
        samples.extend_from_slice(&clip.samples[r.start_sample..r.end_sample]);
    }
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Output of the full segmentation pipeline.
#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub clip: AudioClip,
    pub regions: Vec<CoughRegion>,
    /// Input was all zeros.
    pub silent: bool,
    /// No frame crossed the onset threshold; the normalized full clip is
    /// passed through so downstream consumers never see empty input.
    pub no_cough_detected: bool,
}

/// normalize -> STE -> detect -> extract, composed.
pub fn preprocess_pipeline(
    clip: &AudioClip,
    cfg: &PreprocessConfig,
) -> Result<PreprocessOutput, PreprocessError> {
    let (normalized, silent) = normalize_peak(clip)?;
    let ste = short_time_energy(&normalized, cfg)?;
    let regions = detect_cough_regions(&ste, cfg, normalized.len());
    if regions.is_empty() {
        return Ok(PreprocessOutput {
            clip: normalized,
            regions,
            silent,
            no_cough_detected: true,
        });
    }
    let extracted = extract_cough_signal(&normalized, &regions)?;
    Ok(PreprocessOutput {
        clip: extracted,
        regions,
        silent,
        no_cough_detected: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 16_000)
    }

    #[test]
    fn normalize_scales_to_unit_peak() {
        let (out, silent) = normalize_peak(&clip(vec![0.5, -0.25])).unwrap();
        assert!(!silent);
        assert_eq!(out.samples, vec![1.0, -0.5]);
    }

    #[test]
    fn normalize_silence_flags_and_passes_through() {
        let (out, silent) = normalize_peak(&clip(vec![0.0, 0.0, 0.0])).unwrap();
        assert!(silent);
        assert_eq!(out.samples, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_inverse_scaling_recovers_input() {
        let mut rng = Rng::new(91);
        let samples: Vec<f64> = (0..5000).map(|_| rng.uniform_in(-0.3, 0.3)).collect();
        let c = clip(samples.clone());
        let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        let (out, _) = normalize_peak(&c).unwrap();
        let out_peak = out.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        assert_eq!(out_peak, 1.0);
        for (o, i) in out.samples.iter().zip(samples.iter()) {
            assert!((o * peak - i).abs() < 1e-12);
        }
    }

    #[test]
    fn ste_of_zeros_is_zero() {
        let c = clip(vec![0.0; 2000]);
        let ste = short_time_energy(&c, &cfg()).unwrap();
        assert!(ste.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ste_of_ones_equals_window_len() {
        let c = clip(vec![1.0; 2000]);
        let ste = short_time_energy(&c, &cfg()).unwrap();
        assert_eq!(ste.window_len, 360);
        assert_eq!(ste.hop_len, 180);
        let frames = (2000 - 360) / 180 + 1;
        assert_eq!(ste.values.len(), frames);
        assert!(ste.values.iter().all(|&v| (v - 360.0).abs() < 1e-9));
    }

    #[test]
    fn ste_matches_direct_summation() {
        let mut rng = Rng::new(4);
        let c = clip((0..4000).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
        let ste = short_time_energy(&c, &cfg()).unwrap();
        for (k, &value) in ste.values.iter().enumerate() {
            let mut direct = 0.0;
            for n in 0..ste.window_len {
                let x = c.samples[k * ste.hop_len + n];
                direct += x * x;
            }
            let rel = (value - direct).abs() / direct.abs().max(1e-30);
            assert!(rel < 1e-9, "frame {k}: {value} vs {direct}");
        }
    }

    #[test]
    fn ste_too_short_clip_errors() {
        let c = clip(vec![0.1; 100]);
        match short_time_energy(&c, &cfg()).unwrap_err() {
            PreprocessError::TooShort {
                len: 100,
                window: 360,
            } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    fn series(values: Vec<f64>) -> SteSeries {
        SteSeries {
            values,
            window_len: 360,
            hop_len: 180,
        }
    }

    #[test]
    fn no_onsets_no_regions() {
        let ste = series(vec![1.0; 50]);
        assert!(detect_cough_regions(&ste, &cfg(), 10_000).is_empty());
    }

    #[test]
    fn rectangular_burst_boundaries() {
        let mut values = vec![0.0; 30];
        for v in values.iter_mut().take(20).skip(10) {
            *v = 20.0;
        }
        let ste = series(values);
        let regions = detect_cough_regions(&ste, &cfg(), 100_000);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].start_sample, 10 * 180);
        assert_eq!(regions[0].end_sample, 19 * 180 + 360);
    }

    /// Exhaustive reference scanner: walks the series frame by frame with the
    /// same onset/offset rules but no shortcuts, then merges overlaps.
    fn reference_regions(
        ste: &SteSeries,
        cfg: &PreprocessConfig,
        signal_len: usize,
    ) -> Vec<CoughRegion> {
        let v = &ste.values;
        let mut onsets = Vec::new();
        for k in 0..v.len() {
            let above = v[k] > cfg.onset_threshold;
            let prev_above = k > 0 && v[k - 1] > cfg.onset_threshold;
            if above && !prev_above {
                onsets.push(k);
            }
        }
        let mut raw = Vec::new();
        for (i, &onset) in onsets.iter().enumerate() {
            let limit = if i + 1 < onsets.len() {
                onsets[i + 1]
            } else {
                v.len()
            };
            let mut offset = None;
            for j in (onset..limit).rev() {
                if v[j] > cfg.offset_threshold {
                    offset = Some(j);
                    break;
                }
            }
            let offset = offset.unwrap();
            raw.push((
                onset * ste.hop_len,
                (offset * ste.hop_len + ste.window_len).min(signal_len),
            ));
        }
        let mut merged: Vec<CoughRegion> = Vec::new();
        for (s, e) in raw {
            match merged.last_mut() {
                Some(prev) if s < prev.end_sample => prev.end_sample = prev.end_sample.max(e),
                _ => merged.push(CoughRegion {
                    start_sample: s,
                    end_sample: e,
                }),
            }
        }
        merged
    }

    #[test]
    fn two_bursts_with_decaying_tails_match_reference() {
        // bursts peak at 20 and decay by half each frame
        let mut values = vec![0.0; 80];
        for (i, v) in values.iter_mut().enumerate().take(30).skip(10) {
            *v = 20.0 * 0.5f64.powi((i as i32) - 10);
        }
        for (i, v) in values.iter_mut().enumerate().take(76).skip(50) {
            *v = 20.0 * 0.5f64.powi((i as i32) - 50);
        }
        let ste = series(values);
        let got = detect_cough_regions(&ste, &cfg(), 1_000_000);
        let want = reference_regions(&ste, &cfg(), 1_000_000);
        assert_eq!(got, want);
        assert!(!got.is_empty());
    }

    #[test]
    fn randomized_series_match_reference_scanner() {
        let mut rng = Rng::new(2024);
        for _ in 0..200 {
            let n = 5 + rng.below(120);
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.uniform() < 0.3 {
                        rng.uniform_in(0.0, 30.0)
                    } else {
                        rng.uniform_in(0.0, 0.3)
                    }
                })
                .collect();
            let ste = series(values);
            let len = 1_000_000;
            assert_eq!(
                detect_cough_regions(&ste, &cfg(), len),
                reference_regions(&ste, &cfg(), len)
            );
        }
    }

    #[test]
    fn detected_regions_sorted_and_disjoint() {
        let mut rng = Rng::new(77);
        for _ in 0..50 {
            let values: Vec<f64> = (0..100).map(|_| rng.uniform_in(0.0, 20.0)).collect();
            let ste = series(values);
            let regions = detect_cough_regions(&ste, &cfg(), 1_000_000);
            for w in regions.windows(2) {
                assert!(w[0].end_sample <= w[1].start_sample);
            }
            for r in &regions {
                assert!(r.start_sample < r.end_sample);
            }
        }
    }

    #[test]
    fn extract_whole_clip_identity() {
        let c = clip((0..1000).map(|i| (i as f64).sin() * 0.1).collect());
        let out = extract_cough_signal(
            &c,
            &[CoughRegion {
                start_sample: 0,
                end_sample: 1000,
            }],
        )
        .unwrap();
        assert_eq!(out.samples, c.samples);
    }

    #[test]
    fn extract_two_spans() {
        let c = clip((0..12).map(|i| i as f64).collect());
        let out = extract_cough_signal(
            &c,
            &[
                CoughRegion {
                    start_sample: 0,
                    end_sample: 4,
                },
                CoughRegion {
                    start_sample: 8,
                    end_sample: 12,
                },
            ],
        )
        .unwrap();
        assert_eq!(out.samples, vec![0.0, 1.0, 2.0, 3.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn extract_matches_gather_oracle() {
        let mut rng = Rng::new(8);
        let c = clip((0..5000).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
        let regions = vec![
            CoughRegion {
                start_sample: 100,
                end_sample: 900,
            },
            CoughRegion {
                start_sample: 1500,
                end_sample: 1501,
            },
            CoughRegion {
                start_sample: 3000,
                end_sample: 4999,
            },
        ];
        let out = extract_cough_signal(&c, &regions).unwrap();
        let mut gathered = Vec::new();
        for r in &regions {
            for i in r.start_sample..r.end_sample {
                gathered.push(c.samples[i]);
            }
        }
        assert_eq!(out.samples, gathered);
        assert_eq!(out.len(), regions.iter().map(|r| r.len()).sum::<usize>());
    }

    #[test]
    fn extract_empty_regions_errors() {
        let c = clip(vec![0.0; 100]);
        match extract_cough_signal(&c, &[]).unwrap_err() {
            PreprocessError::EmptyRegions => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    /// White-noise burst helper with exact boundaries. Starts sit on the
    /// 180-sample hop grid and the burst crest is clamped so every full
    /// in-burst frame clears the onset threshold.
    fn burst_clip(bursts: &[(usize, usize)], len: usize, seed: u64) -> AudioClip {
        let mut rng = Rng::new(seed);
        let mut samples = vec![0.0; len];
        for s in samples.iter_mut() {
            *s = rng.normal() * 0.002;
        }
        for &(start, end) in bursts {
            assert_eq!(start % 180, 0, "test bursts start on the hop grid");
            for s in samples.iter_mut().take(end).skip(start) {
                *s = (rng.normal() * 0.4).clamp(-1.0, 1.0);
            }
        }
        clip(samples)
    }

    #[test]
    fn pipeline_on_silence_passes_through_with_flags() {
        let c = clip(vec![0.0; 8000]);
        let out = preprocess_pipeline(&c, &cfg()).unwrap();
        assert!(out.silent);
        assert!(out.no_cough_detected);
        assert_eq!(out.clip.samples, c.samples);
        assert!(out.regions.is_empty());
    }

    #[test]
    fn pipeline_duration_tracks_burst_durations() {
        let bursts = [(7920usize, 12960usize), (23940, 27900), (39960, 45900)];
        let c = burst_clip(&bursts, 64000, 5);
        let out = preprocess_pipeline(&c, &cfg()).unwrap();
        assert!(!out.no_cough_detected);
        let true_total: usize = bursts.iter().map(|(s, e)| e - s).sum();
        // each boundary can move by at most a window or a hop
        let tolerance = (360 + 180) * bursts.len();
        let got = out.clip.len() as i64;
        assert!(
            (got - true_total as i64).unsigned_abs() as usize <= tolerance,
            "extracted {got} vs true {true_total}"
        );
    }

    #[test]
    fn pipeline_idempotent_on_segmented_audio() {
        let c = burst_clip(&[(3960, 9000), (19980, 25920), (39960, 47880)], 64000, 9);
        let once = preprocess_pipeline(&c, &cfg()).unwrap();
        let twice = preprocess_pipeline(&once.clip, &cfg()).unwrap();
        assert!(
            twice.clip.len() as f64 >= 0.95 * once.clip.len() as f64,
            "second pass kept {} of {}",
            twice.clip.len(),
            once.clip.len()
        );
    }

    #[test]
    fn ste_invariant_to_sign_flip() {
        let mut rng = Rng::new(12);
        let samples: Vec<f64> = (0..3000).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let flipped: Vec<f64> = samples.iter().map(|&x| -x).collect();
        let a = short_time_energy(&clip(samples), &cfg()).unwrap();
        let b = short_time_energy(&clip(flipped), &cfg()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn scaling_input_cancels_after_normalization() {
        let c = burst_clip(&[(1980, 5940)], 16000, 33);
        let scaled = clip(c.samples.iter().map(|&x| x * 0.123).collect());
        let a = preprocess_pipeline(&c, &cfg()).unwrap();
        let b = preprocess_pipeline(&scaled, &cfg()).unwrap();
        assert_eq!(a.regions, b.regions);
        for (x, y) in a.clip.samples.iter().zip(b.clip.samples.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
