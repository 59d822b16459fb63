//! WAV ingestion and emission, linear resampling, and labeled dataset
//! manifests with subject-disjoint train/validation splitting.
//!
//! The reader accepts RIFF/WAVE with 16-bit PCM or 32-bit IEEE float data in
//! one or two channels; stereo is downmixed by channel mean. The writer emits
//! canonical 44-byte-header 16-bit PCM mono.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::rng::Rng;

/// The rate every clip is resampled to on ingestion.
pub const PIPELINE_RATE: u32 = 16_000;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Mono audio clip with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug)]
pub enum WavError {
    Io(std::io::Error),
    /// Structural problem; names the chunk that failed to parse.
    Parse {
        chunk: &'static str,
        detail: String,
    },
    /// Format/bit-depth combination the pipeline does not accept.
    Unsupported {
        format_tag: u16,
        bits: u16,
        channels: u16,
    },
    /// A data chunk with zero usable bytes.
    EmptyAudio,
}

impl fmt::Display for WavError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WavError::Io(e) => write!(f, "wav i/o error: {e}"),
            WavError::Parse { chunk, detail } => {
                write!(f, "malformed wav: chunk `{chunk}`: {detail}")
            }
            WavError::Unsupported {
                format_tag,
                bits,
                channels,
            } => write!(
                f,
                "unsupported wav encoding: format {format_tag}, {bits}-bit, {channels} channel(s)"
            ),
            WavError::EmptyAudio => write!(f, "wav contains no audio data"),
        }
    }
}

impl std::error::Error for WavError {}

impl From<std::io::Error> for WavError {
    fn from(e: std::io::Error) -> Self {
        WavError::Io(e)
    }
}

/// Parses a RIFF/WAVE file into a mono clip with samples in [-1, 1].
///
/// 16-bit PCM samples are scaled by 1/32768; stereo is downmixed by the
/// mean of the two channels.
pub fn load_wav(path: &Path) -> Result<AudioClip, WavError> {
    let bytes = std::fs::read(path)?;
    parse_wav_bytes(&bytes)
}

/// Same as [`load_wav`] but on an in-memory buffer.
pub fn parse_wav_bytes(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::Parse {
            chunk: "RIFF",
            detail: format!("file too small ({} bytes)", bytes.len()),
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(WavError::Parse {
            chunk: "RIFF",
            detail: "missing RIFF magic".into(),
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::Parse {
            chunk: "RIFF",
            detail: "missing WAVE form type".into(),
        });
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format_tag, channels, rate, bits)

    while pos + 8 <= bytes.len() {
        let chunk_id: [u8; 4] = bytes[pos..pos + 4].try_into().unwrap();
        let chunk_size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;

        match &chunk_id {
            b"fmt " => {
                if chunk_size < 16 || body + 16 > bytes.len() {
                    return Err(WavError::Parse {
                        chunk: "fmt ",
                        detail: format!("chunk truncated (size {chunk_size})"),
                    });
                }
                let format_tag = u16::from_le_bytes(bytes[body..body + 2].try_into().unwrap());
                let channels = u16::from_le_bytes(bytes[body + 2..body + 4].try_into().unwrap());
                let rate = u32::from_le_bytes(bytes[body + 4..body + 8].try_into().unwrap());
                let bits = u16::from_le_bytes(bytes[body + 14..body + 16].try_into().unwrap());
                if rate == 0 {
                    return Err(WavError::Parse {
                        chunk: "fmt ",
                        detail: "sample rate is zero".into(),
                    });
                }
                fmt = Some((format_tag, channels, rate, bits));
            }
            b"data" => {
                let (format_tag, channels, rate, bits) = fmt.ok_or(WavError::Parse {
                    chunk: "data",
                    detail: "data chunk before fmt chunk".into(),
                })?;
                if !(channels == 1 || channels == 2) {
                    return Err(WavError::Unsupported {
                        format_tag,
                        bits,
                        channels,
                    });
                }
                let end = body.checked_add(chunk_size).ok_or(WavError::Parse {
                    chunk: "data",
                    detail: "chunk size overflow".into(),
                })?;
                if end > bytes.len() {
                    return Err(WavError::Parse {
                        chunk: "data",
                        detail: format!(
                            "declares {chunk_size} bytes but only {} remain",
                            bytes.len() - body
                        ),
                    });
                }
                let payload = &bytes[body..end];
                if payload.is_empty() {
                    return Err(WavError::EmptyAudio);
                }
                let interleaved = decode_samples(payload, format_tag, bits, channels)?;
                if interleaved.is_empty() {
                    return Err(WavError::EmptyAudio);
                }
                let mono = downmix(interleaved, channels);
                return Ok(AudioClip::new(mono, rate));
            }
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body + chunk_size + (chunk_size & 1);
    }

    Err(WavError::Parse {
        chunk: "data",
        detail: "no data chunk found".into(),
    })
}

fn decode_samples(
    payload: &[u8],
    format_tag: u16,
    bits: u16,
    channels: u16,
) -> Result<Vec<f64>, WavError> {
    match (format_tag, bits) {
        (FORMAT_PCM, 16) => Ok(payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect()),
        (FORMAT_IEEE_FLOAT, 32) => {
            let mut out = Vec::with_capacity(payload.len() / 4);
            for c in payload.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
                if !v.is_finite() {
                    return Err(WavError::Parse {
                        chunk: "data",
                        detail: "non-finite float sample".into(),
                    });
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            Ok(out)
        }
        _ => Err(WavError::Unsupported {
            format_tag,
            bits,
            channels,
        }),
    }
}

fn downmix(interleaved: Vec<f64>, channels: u16) -> Vec<f64> {
    if channels == 1 {
        return interleaved;
    }
    interleaved
        .chunks_exact(2)
        .map(|pair| (pair[0] + pair[1]) / 2.0)
        .collect()
}

/// Writes a 16-bit PCM mono file with the canonical 44-byte header.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), WavError> {
    let bytes = encode_wav_bytes(clip);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Encodes a clip as 16-bit PCM mono WAV bytes.
pub fn encode_wav_bytes(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round() as i32;
        let q = q.clamp(i16::MIN as i32, i16::MAX as i32) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Linear-interpolation resampling.
///
/// Output length is `round(len * target_rate / source_rate)`; a constant
/// signal resamples to the same constant exactly.
pub fn resample_linear(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate || clip.samples.is_empty() {
        return AudioClip::new(clip.samples.clone(), target_rate);
    }
    let n = clip.samples.len();
    let out_len = ((n as f64) * (target_rate as f64) / (clip.sample_rate as f64)).round() as usize;
    let out_len = out_len.max(1);
    let step = clip.sample_rate as f64 / target_rate as f64;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * step;
        let idx = pos as usize;
        if idx + 1 < n {
            let frac = pos - idx as f64;
            let a = clip.samples[idx];
            let b = clip.samples[idx + 1];
            out.push(a + frac * (b - a));
        } else {
            out.push(clip.samples[n - 1]);
        }
    }
    AudioClip::new(out, target_rate)
}

/// Binary COVID label carried by a manifest row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Cough,
    Breath,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Cough => write!(f, "cough"),
            Modality::Breath => write!(f, "breath"),
        }
    }
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_path: PathBuf,
    pub label: u8,
    pub modality: Modality,
    pub subject_id: String,
}

pub const MANIFEST_HEADER: &str = "clip_path,label,modality,subject_id";

#[derive(Debug)]
pub enum ManifestError {
    Io(std::io::Error),
    /// Wrong header or wrong column count; carries the 1-based line number.
    Schema {
        line: usize,
        detail: String,
    },
    /// A field failed to parse; carries the 1-based line number.
    Value {
        line: usize,
        detail: String,
    },
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Io(e) => write!(f, "manifest i/o error: {e}"),
            ManifestError::Schema { line, detail } => {
                write!(f, "manifest schema error at line {line}: {detail}")
            }
            ManifestError::Value { line, detail } => {
                write!(f, "manifest value error at line {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for ManifestError {}

impl From<std::io::Error> for ManifestError {
    fn from(e: std::io::Error) -> Self {
        ManifestError::Io(e)
    }
}

/// Loads a manifest CSV with header `clip_path,label,modality,subject_id`.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// Parses manifest text (LF or CRLF line endings).
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut entries = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(ManifestError::Schema {
                line: 1,
                detail: format!("expected header `{MANIFEST_HEADER}`, found `{header}`"),
            })
        }
        None => {
            return Err(ManifestError::Schema {
                line: 1,
                detail: "empty manifest".into(),
            })
        }
    }
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(ManifestError::Schema {
                line: line_no,
                detail: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let label = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(ManifestError::Value {
                    line: line_no,
                    detail: format!("label must be 0 or 1, found `{other}`"),
                })
            }
        };
        let modality = match fields[2] {
            "cough" => Modality::Cough,
            "breath" => Modality::Breath,
            other => {
                return Err(ManifestError::Value {
                    line: line_no,
                    detail: format!("modality must be cough or breath, found `{other}`"),
                })
            }
        };
        entries.push(ManifestEntry {
            clip_path: PathBuf::from(fields[0]),
            label,
            modality,
            subject_id: fields[3].to_string(),
        });
    }
    Ok(entries)
}

/// Serializes entries back to manifest text. Parsing the result yields the
/// same entries (fixed point).
pub fn render_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.clip_path.display(),
            e.label,
            e.modality,
            e.subject_id
        ));
    }
    out
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), ManifestError> {
    std::fs::write(path, render_manifest(entries))?;
    Ok(())
}

/// Subject-disjoint train/validation partition.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
    pub seed: u64,
}

#[derive(Debug)]
pub enum SplitError {
    EmptyInput,
    BadFraction(f64),
    /// Subject structure makes a disjoint split impossible.
    Infeasible(String),
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::EmptyInput => write!(f, "cannot split an empty entry list"),
            SplitError::BadFraction(v) => write!(f, "fraction must be in (0, 1), got {v}"),
            SplitError::Infeasible(why) => write!(f, "split infeasible: {why}"),
        }
    }
}

impl std::error::Error for SplitError {}

/// Deterministic subject-disjoint split.
///
/// Validation receives whole subjects until it holds at least
/// `max(1, round(fraction * n))` entries; no subject appears on both sides.
pub fn split_dataset(
    entries: &[ManifestEntry],
    fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, SplitError> {
    if entries.is_empty() {
        return Err(SplitError::EmptyInput);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::BadFraction(fraction));
    }

    // Subject groups in first-appearance order, then shuffled by seed.
    let mut subjects: Vec<&str> = Vec::new();
    for e in entries {
        if !subjects.contains(&e.subject_id.as_str()) {
            subjects.push(&e.subject_id);
        }
    }
    if subjects.len() == 1 && entries.len() > 1 {
        return Err(SplitError::Infeasible(format!(
            "all {} entries share subject `{}`",
            entries.len(),
            subjects[0]
        )));
    }

    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut order);

    let target = ((fraction * entries.len() as f64).round() as usize).max(1);
    let mut in_validation = vec![false; subjects.len()];
    let mut count = 0usize;
    for &s in &order {
        if count >= target {
            break;
        }
        in_validation[s] = true;
        count += entries
            .iter()
            .filter(|e| e.subject_id == subjects[s])
            .count();
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    for e in entries {
        let s = subjects.iter().position(|&x| x == e.subject_id).unwrap();
        if in_validation[s] {
            validation.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    if train.is_empty() {
        return Err(SplitError::Infeasible(
            "validation target consumed every subject".into(),
        ));
    }
    Ok(DatasetSplit {
        train,
        validation,
        seed,
    })
}
