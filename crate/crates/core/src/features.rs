//! Deterministic spectral frontend: framing, radix-2 FFT, mel filterbank,
//! log compression, plus the single-dimension log-energy frontend used as a
//! weak-features baseline.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;

/// Frontend parameters. `fft_size` must be a power of two at least as large
/// as the frame length in samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub mel_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            mel_bins: 40,
            f_min: 50.0,
            f_max: 7600.0,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn frame_samples(&self, rate: u32) -> usize {
        (self.frame_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self, rate: u32) -> Result<(), FeatureError> {
        if !self.fft_size.is_power_of_two() {
            return Err(FeatureError::BadConfig(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.fft_size < self.frame_samples(rate) {
            return Err(FeatureError::BadConfig(format!(
                "fft_size {} smaller than frame of {} samples",
                self.fft_size,
                self.frame_samples(rate)
            )));
        }
        if !(self.f_min < self.f_max && self.f_max <= rate as f64 / 2.0) {
            return Err(FeatureError::BadConfig(format!(
                "need f_min < f_max <= rate/2, got {}..{} at {} Hz",
                self.f_min, self.f_max, rate
            )));
        }
        if self.mel_bins < 2 {
            return Err(FeatureError::BadConfig("mel_bins must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum FeatureError {
    BadConfig(String),
    TooShort { len: usize, frame: usize },
    Io(std::io::Error),
    BadFile(String),
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::BadConfig(why) => write!(f, "bad frontend config: {why}"),
            FeatureError::TooShort { len, frame } => {
                write!(
                    f,
                    "clip of {len} samples is shorter than one {frame}-sample frame"
                )
            }
            FeatureError::Io(e) => write!(f, "feature file i/o error: {e}"),
            FeatureError::BadFile(why) => write!(f, "bad feature file: {why}"),
        }
    }
}

impl std::error::Error for FeatureError {}

impl From<std::io::Error> for FeatureError {
    fn from(e: std::io::Error) -> Self {
        FeatureError::Io(e)
    }
}

/// Which frontend produced a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    LogMel,
    RawFrame,
}

impl FeatureKind {
    pub fn code(self) -> u32 {
        match self {
            FeatureKind::LogMel => 0,
            FeatureKind::RawFrame => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::LogMel),
            1 => Some(FeatureKind::RawFrame),
            _ => None,
        }
    }
}

/// T x F feature matrix, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub frame_hop_ms: f64,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.bins + f]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    fn mul(self, other: Complex) -> Complex {
        Complex::new(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )
    }
}

/// In-place iterative radix-2 FFT. `invert` applies the conjugate transform
/// and 1/n scaling.
pub(crate) fn fft_in_place(buf: &mut [Complex], invert: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if invert { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let w_len = Complex::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = Complex::new(u.re + v.re, u.im + v.im);
                buf[i + k + len / 2] = Complex::new(u.re - v.re, u.im - v.im);
                w = w.mul(w_len);
            }
            i += len;
        }
        len <<= 1;
    }
    if invert {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            v.re *= scale;
            v.im *= scale;
        }
    }
}

/// One-sided DFT of a real signal zero-padded to `n` points.
///
/// Returns bins 0..=n/2 of `X[k] = sum_t x[t] exp(-2*pi*i*k*t/n)`.
pub fn fft_real(signal: &[f64], n: usize) -> Result<Vec<Complex>, FeatureError> {
    if !n.is_power_of_two() {
        return Err(FeatureError::BadConfig(format!(
            "fft size {n} is not a power of two"
        )));
    }
    if signal.len() > n {
        return Err(FeatureError::BadConfig(format!(
            "signal of {} samples exceeds fft size {n}",
            signal.len()
        )));
    }
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (i, &x) in signal.iter().enumerate() {
        buf[i].re = x;
    }
    fft_in_place(&mut buf, false);
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

/// Frequency in Hz to mel.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Mel to frequency in Hz.
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `mel_bins + 2` boundary points spanning
/// `[f_min, f_max]` uniformly on the mel scale. Filter `i` peaks at point
/// `i + 1`.
pub fn mel_boundaries(cfg: &FrontendConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.f_min);
    let hi = hz_to_mel(cfg.f_max);
    (0..cfg.mel_bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bins + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, `mel_bins x (fft_size/2 + 1)`, row-major.
///
/// Each row is peak-normalized to 1. A filter too narrow to cover any FFT
/// bin is given weight 1 at the bin nearest its center so every row sums to
/// a positive value.
pub fn mel_filterbank(cfg: &FrontendConfig, rate: u32) -> Result<Vec<Vec<f64>>, FeatureError> {
    cfg.validate(rate)?;
    let n_bins = cfg.fft_size / 2 + 1;
    let boundaries = mel_boundaries(cfg);
    let bin_hz = rate as f64 / cfg.fft_size as f64;
    let mut rows = Vec::with_capacity(cfg.mel_bins);
    for m in 0..cfg.mel_bins {
        let left = boundaries[m];
        let center = boundaries[m + 1];
        let right = boundaries[m + 2];
        let mut row = vec![0.0; n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            if f > left && f < center {
                *w = (f - left) / (center - left);
            } else if (center..right).contains(&f) {
                *w = (right - f) / (right - center);
            }
        }
        let peak = row.iter().fold(0.0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            for w in row.iter_mut() {
                *w /= peak;
            }
        } else {
            let nearest = (center / bin_hz).round() as usize;
            row[nearest.min(n_bins - 1)] = 1.0;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Log-mel features: per frame Hann window, zero-pad to `fft_size`, power
/// spectrum, mel projection, then `ln(max(value, log_floor))`.
pub fn log_mel_features(
    clip: &AudioClip,
    cfg: &FrontendConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let filterbank = mel_filterbank(cfg, clip.sample_rate)?;
    let frame = cfg.frame_samples(clip.sample_rate);
    let hop = cfg.hop_samples(clip.sample_rate);
    if clip.len() < frame {
        return Err(FeatureError::TooShort {
            len: clip.len(),
            frame,
        });
    }
    let window = hann_window(frame);
    let frames = (clip.len() - frame) / hop + 1;
    let n_fft_bins = cfg.fft_size / 2 + 1;
    let mut data = Vec::with_capacity(frames * cfg.mel_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut power = vec![0.0f64; n_fft_bins];
    for t in 0..frames {
        let start = t * hop;
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for i in 0..frame {
            buf[i].re = clip.samples[start + i] * window[i];
        }
        fft_in_place(&mut buf, false);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sq();
        }
        for row in &filterbank {
            let e: f64 = row.iter().zip(power.iter()).map(|(w, p)| w * p).sum();
            data.push(e.max(cfg.log_floor).ln());
        }
    }
    Ok(FeatureMatrix {
        data,
        frames,
        bins: cfg.mel_bins,
        frame_hop_ms: cfg.hop_ms,
        kind: FeatureKind::LogMel,
    })
}

/// Weak-features baseline: one log frame energy per frame.
pub fn raw_frame_features(
    clip: &AudioClip,
    cfg: &FrontendConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let frame = cfg.frame_samples(clip.sample_rate);
    let hop = cfg.hop_samples(clip.sample_rate);
    if clip.len() < frame {
        return Err(FeatureError::TooShort {
            len: clip.len(),
            frame,
        });
    }
    let frames = (clip.len() - frame) / hop + 1;
    let mut data = Vec::with_capacity(frames);
    for t in 0..frames {
        let start = t * hop;
        let energy: f64 = clip.samples[start..start + frame]
            .iter()
            .map(|&x| x * x)
            .sum();
        data.push(energy.max(cfg.log_floor).ln());
    }
    Ok(FeatureMatrix {
        data,
        frames,
        bins: 1,
        frame_hop_ms: cfg.hop_ms,
        kind: FeatureKind::RawFrame,
    })
}

const FEATURE_MAGIC: &[u8; 4] = b"C2CF";

/// Writes the binary feature format: magic `C2CF`, u32 frame count, u32 bin
/// count, u32 kind code, then row-major little-endian f32 values.
pub fn write_features(features: &FeatureMatrix, path: &Path) -> Result<(), FeatureError> {
    let mut out = Vec::with_capacity(16 + features.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.frames as u32).to_le_bytes());
    out.extend_from_slice(&(features.bins as u32).to_le_bytes());
    out.extend_from_slice(&features.kind.code().to_le_bytes());
    for &v in &features.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads the binary feature format written by [`write_features`].
pub fn read_features(path: &Path, hop_ms: f64) -> Result<FeatureMatrix, FeatureError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 || &bytes[0..4] != FEATURE_MAGIC {
        return Err(FeatureError::BadFile("missing C2CF header".into()));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let bins = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let kind_code = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let kind = FeatureKind::from_code(kind_code)
        .ok_or_else(|| FeatureError::BadFile(format!("unknown kind code {kind_code}")))?;
    let expected = 16 + frames * bins * 4;
    if bytes.len() != expected {
        return Err(FeatureError::BadFile(format!(
            "expected {expected} bytes for {frames}x{bins}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(FeatureMatrix {
        data,
        frames,
        bins,
        frame_hop_ms: hop_ms,
        kind,
    })
}
