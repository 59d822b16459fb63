//! Synthetic corpus generator: band-limited noise bursts over a low-level
//! background, with exact burst boundaries and a class-dependent band so
//! segmentation accuracy and classifier separability are both testable
//! without real recordings.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio_io::{write_manifest, write_wav, AudioClip, ManifestEntry, Modality, WavError};
use crate::features::{fft_in_place, Complex};
use crate::preprocess::{normalize_peak, short_time_energy, CoughRegion, PreprocessConfig};
use crate::rng::{derive_seed, Rng};

/// Corpus recipe. Labels alternate per clip; each clip gets its own subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub clip_sec: f64,
    /// Inclusive range of bursts per clip; a lower bound of 0 produces some
    /// pure-background clips.
    pub bursts_per_clip: (usize, usize),
    pub burst_sec: (f64, f64),
    pub class0_band: (f64, f64),
    pub class1_band: (f64, f64),
    pub snr_db: f64,
    pub seed: u64,
    pub sample_rate: u32,
    /// Also emit a label-free noise "breath" clip per subject.
    pub with_breath: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clips: 20,
            clip_sec: 6.0,
            bursts_per_clip: (2, 3),
            burst_sec: (0.25, 0.45),
            class0_band: (300.0, 1200.0),
            class1_band: (2500.0, 5000.0),
            snr_db: 30.0,
            seed: 0,
            sample_rate: 16_000,
            with_breath: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let nyquist = self.sample_rate as f64 / 2.0;
        for (name, band) in [("class0", self.class0_band), ("class1", self.class1_band)] {
            if !(band.0 > 0.0 && band.0 < band.1 && band.1 < nyquist) {
                return Err(SynthError::BadSpec(format!(
                    "{name} band {band:?} must sit inside (0, {nyquist})"
                )));
            }
        }
        if self.bursts_per_clip.0 > self.bursts_per_clip.1 {
            return Err(SynthError::BadSpec(format!(
                "bursts_per_clip {:?} has lower bound above upper",
                self.bursts_per_clip
            )));
        }
        if !(self.burst_sec.0 > 0.0 && self.burst_sec.0 <= self.burst_sec.1) {
            return Err(SynthError::BadSpec(format!(
                "burst_sec {:?} is not a positive range",
                self.burst_sec
            )));
        }
        if self.burst_sec.1 >= self.clip_sec {
            return Err(SynthError::BadSpec(format!(
                "burst duration {} must be below clip duration {}",
                self.burst_sec.1, self.clip_sec
            )));
        }
        if self.n_clips == 0 {
            return Err(SynthError::BadSpec("n_clips must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum SynthError {
    BadSpec(String),
    Io(std::io::Error),
    Wav(WavError),
    /// The constructive burst/background energy guarantee failed.
    SeparationTooLow {
        clip: usize,
        ratio: f64,
    },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::BadSpec(why) => write!(f, "bad synth spec: {why}"),
            SynthError::Io(e) => write!(f, "synth i/o error: {e}"),
            SynthError::Wav(e) => write!(f, "{e}"),
            SynthError::SeparationTooLow { clip, ratio } => write!(
                f,
                "clip {clip}: burst/background energy ratio {ratio:.1} below the 10x floor"
            ),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e)
    }
}

impl From<WavError> for SynthError {
    fn from(e: WavError) -> Self {
        SynthError::Wav(e)
    }
}

/// Ground truth for one generated clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthTruth {
    pub clip_path: String,
    pub label: u8,
    pub bursts: Vec<CoughRegion>,
}

/// One generated clip before any file I/O.
#[derive(Debug, Clone)]
pub struct GeneratedClip {
    pub audio: AudioClip,
    pub label: u8,
    pub subject_id: String,
    pub bursts: Vec<(usize, usize)>,
    pub breath: Option<AudioClip>,
}

// Burst peaks are limited to 2.5 sigma before rescaling, which pins the
// burst crest factor and keeps its short-time energy far above the onset
// threshold once the clip is peak-normalized.
const BURST_CLAMP_SIGMA: f64 = 2.5;
const BURST_RMS: f64 = 0.4;
const EDGE_PAD_SEC: f64 = 0.1;
const BURST_GAP_SEC: f64 = 0.15;

/// Band-limited unit noise of length `len`, shaped by zeroing FFT bins
/// outside `band` and clamping the crest.
fn band_noise(rng: &mut Rng, len: usize, band: (f64, f64), rate: u32) -> Vec<f64> {
    let n = len.next_power_of_two().max(8);
    let mut buf: Vec<Complex> = (0..n).map(|_| Complex::new(rng.normal(), 0.0)).collect();
    fft_in_place(&mut buf, false);
    for (k, v) in buf.iter_mut().enumerate() {
        let freq = k.min(n - k) as f64 * rate as f64 / n as f64;
        if freq < band.0 || freq > band.1 {
            *v = Complex::new(0.0, 0.0);
        }
    }
    fft_in_place(&mut buf, true);
    let mut out: Vec<f64> = buf[..len].iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        for x in out.iter_mut() {
            *x = (*x / rms).clamp(-BURST_CLAMP_SIGMA, BURST_CLAMP_SIGMA);
        }
    }
    let clamped_rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    if clamped_rms > 0.0 {
        let gain = BURST_RMS / clamped_rms;
        for x in out.iter_mut() {
            *x *= gain;
        }
    }
    out
}

/// Generates clip `index` of the corpus, entirely in memory.
pub fn generate_clip(spec: &SynthSpec, index: usize) -> GeneratedClip {
    let rate = spec.sample_rate;
    let len = (spec.clip_sec * rate as f64).round() as usize;
    let label = (index % 2) as u8;
    let band = if label == 0 {
        spec.class0_band
    } else {
        spec.class1_band
    };
    let mut rng = Rng::new(derive_seed(spec.seed, &[0xB0, index as u64]));

    // background: full-band noise at the requested SNR below the burst RMS
    let bg_sigma = BURST_RMS / 10f64.powf(spec.snr_db / 20.0);
    let mut samples: Vec<f64> = (0..len).map(|_| rng.normal() * bg_sigma).collect();

    // one quiet click pins the background crest factor, so a burst-free clip
    // still normalizes to a peak far above its noise floor and never crosses
    // the onset threshold
    let click_pos = rng.below(len);
    let click_sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
    samples[click_pos] += click_sign * 8.0 * bg_sigma;

    // place bursts in per-burst slots so they stay sorted and well separated
    let n_bursts =
        rng.range_inclusive(spec.bursts_per_clip.0 as i64, spec.bursts_per_clip.1 as i64) as usize;
    let pad = (EDGE_PAD_SEC * rate as f64) as usize;
    let gap = (BURST_GAP_SEC * rate as f64) as usize;
    // burst starts snap to the analysis hop grid, which leaves one
    // zero-overlap analysis frame before every attack and keeps adjacent
    // detections from running into each other
    let hop = PreprocessConfig::default().hop_samples(rate).max(1);
    let mut bursts = Vec::with_capacity(n_bursts);
    let usable = len.saturating_sub(2 * pad);
    let slot = usable / n_bursts.max(1);
    for b in 0..n_bursts {
        let slot_start = pad + b * slot;
        let max_dur = slot.saturating_sub(gap);
        if max_dur < (spec.burst_sec.0 * rate as f64) as usize {
            continue;
        }
        let want = rng.uniform_in(spec.burst_sec.0, spec.burst_sec.1);
        let dur = ((want * rate as f64) as usize).min(max_dur);
        let play = slot - gap - dur;
        let offset = if play > 0 { rng.below(play + 1) } else { 0 };
        let start = (slot_start + offset) / hop * hop;
        let burst = band_noise(&mut rng, dur, band, rate);
        for (i, &x) in burst.iter().enumerate() {
            samples[start + i] += x;
        }
        bursts.push((start, start + dur));
    }

    // keep the writer's [-1, 1] contract with a little headroom
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let gain = 0.9 / peak;
        for s in samples.iter_mut() {
            *s *= gain;
        }
    }

    let breath = spec.with_breath.then(|| {
        let mut brng = Rng::new(derive_seed(spec.seed, &[0xBE, index as u64]));
        let breath_samples: Vec<f64> = (0..len)
            .map(|_| (brng.normal() * 0.1).clamp(-0.9, 0.9))
            .collect();
        AudioClip::new(breath_samples, rate)
    });

    GeneratedClip {
        audio: AudioClip::new(samples, rate),
        label,
        subject_id: format!("subj{index:03}"),
        bursts,
        breath,
    }
}

/// Mean in-burst STE over mean out-of-burst STE on the peak-normalized clip.
/// Frames straddling a boundary are ignored.
pub fn burst_energy_ratio(clip: &GeneratedClip, cfg: &PreprocessConfig) -> Option<f64> {
    if clip.bursts.is_empty() {
        return None;
    }
    let (normalized, _) = normalize_peak(&clip.audio).ok()?;
    let ste = short_time_energy(&normalized, cfg).ok()?;
    let mut inside = (0.0, 0usize);
    let mut outside = (0.0, 0usize);
    for (k, &v) in ste.values.iter().enumerate() {
        let lo = k * ste.hop_len;
        let hi = lo + ste.window_len;
        let in_burst = clip.bursts.iter().any(|&(s, e)| lo >= s && hi <= e);
        let out_burst = clip.bursts.iter().all(|&(s, e)| hi <= s || lo >= e);
        if in_burst {
            inside.0 += v;
            inside.1 += 1;
        } else if out_burst {
            outside.0 += v;
            outside.1 += 1;
        }
    }
    if inside.1 == 0 || outside.1 == 0 {
        return None;
    }
    Some((inside.0 / inside.1 as f64) / (outside.0 / outside.1 as f64).max(1e-300))
}

/// Generates the corpus on disk: one WAV per clip (plus optional breath
/// WAVs), a manifest, and a `truth.json` with exact burst intervals.
/// Deterministic in `spec.seed`, byte for byte.
pub fn generate_corpus(
    spec: &SynthSpec,
    out_dir: &Path,
) -> Result<(PathBuf, Vec<SynthTruth>), SynthError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let cfg = PreprocessConfig::default();
    let mut entries = Vec::new();
    let mut truths = Vec::new();
    for i in 0..spec.n_clips {
        let clip = generate_clip(spec, i);
        if spec.snr_db >= 20.0 {
            if let Some(ratio) = burst_energy_ratio(&clip, &cfg) {
                if ratio < 10.0 {
                    return Err(SynthError::SeparationTooLow { clip: i, ratio });
                }
            }
        }
        let name = format!("clip_{i:03}.wav");
        write_wav(&clip.audio, &out_dir.join(&name))?;
        entries.push(ManifestEntry {
            clip_path: PathBuf::from(&name),
            label: clip.label,
            modality: Modality::Cough,
            subject_id: clip.subject_id.clone(),
        });
        truths.push(SynthTruth {
            clip_path: name,
            label: clip.label,
            bursts: clip
                .bursts
                .iter()
                .map(|&(s, e)| CoughRegion {
                    start_sample: s,
                    end_sample: e,
                })
                .collect(),
        });
        if let Some(breath) = &clip.breath {
            let breath_name = format!("clip_{i:03}_breath.wav");
            write_wav(breath, &out_dir.join(&breath_name))?;
            entries.push(ManifestEntry {
                clip_path: PathBuf::from(&breath_name),
                label: clip.label,
                modality: Modality::Breath,
                subject_id: clip.subject_id.clone(),
            });
            truths.push(SynthTruth {
                clip_path: breath_name,
                label: clip.label,
                bursts: Vec::new(),
            });
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&entries, &manifest_path).map_err(|e| match e {
        crate::audio_io::ManifestError::Io(io) => SynthError::Io(io),
        other => SynthError::BadSpec(other.to_string()),
    })?;
    let truth_json = serde_json::to_string_pretty(&truths).expect("truth serializes");
    std::fs::write(out_dir.join("truth.json"), truth_json)?;
    Ok((manifest_path, truths))
}
