//! The training loop, the scenario pipeline arms, and the ablation harness.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{roc_auc, MetricError};
use super::optim::{lr_schedule, AdamState, GradBuffer, TrainConfig};
use crate::audio_io::{
    load_manifest, load_wav, resample_linear, split_dataset, AudioClip, DatasetSplit,
    ManifestEntry, ManifestError, Modality, SplitError, WavError, PIPELINE_RATE,
};
use crate::augment::{
    feature_mask, fix_length, random_shift, AugmentConfig, AugmentError, CropMode,
};
use crate::features::{log_mel_features, raw_frame_features, FeatureError, FeatureMatrix};
use crate::model::{
    classifier_forward, encoder_forward, fuse_alpha, init_model_params, AlphaFusion, BoundParams,
    ClassifierConfig, EtEncoderConfig, ModelError, ParamSet, Tape, P_RAW_ALPHA,
};
use crate::preprocess::{preprocess_pipeline, PreprocessConfig, PreprocessError};
use crate::rng::{derive_seed, Rng};

/// Pipeline arms: baseline cough-only, breath-only, gated dual input, and
/// the three module-removal arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "C2C")]
    C2c,
    #[serde(rename = "D2C")]
    D2c,
    #[serde(rename = "B2C")]
    B2c,
    #[serde(rename = "no_preprocess")]
    NoPreprocess,
    #[serde(rename = "raw_frontend")]
    RawFrontend,
    #[serde(rename = "no_augment")]
    NoAugment,
}

impl Scenario {
    pub fn all() -> [Scenario; 6] {
        [
            Scenario::C2c,
            Scenario::D2c,
            Scenario::B2c,
            Scenario::NoPreprocess,
            Scenario::RawFrontend,
            Scenario::NoAugment,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::C2c => "C2C",
            Scenario::D2c => "D2C",
            Scenario::B2c => "B2C",
            Scenario::NoPreprocess => "no_preprocess",
            Scenario::RawFrontend => "raw_frontend",
            Scenario::NoAugment => "no_augment",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::all().into_iter().find(|sc| sc.name() == s)
    }

    fn uses_breath(&self) -> bool {
        matches!(self, Scenario::D2c | Scenario::B2c)
    }

    fn preprocess_enabled(&self) -> bool {
        !matches!(self, Scenario::NoPreprocess)
    }

    fn augment_enabled(&self) -> bool {
        !matches!(self, Scenario::NoAugment)
    }

    fn raw_frontend(&self) -> bool {
        matches!(self, Scenario::RawFrontend)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// All knobs of the signal path, bundled so a run can be fingerprinted.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub frontend: crate::features::FrontendConfig,
    pub augment: AugmentConfig,
    pub encoder: EtEncoderConfig,
    pub classifier: ClassifierConfig,
}

#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Wav(WavError),
    Manifest(ManifestError),
    Split(SplitError),
    Preprocess(PreprocessError),
    Feature(FeatureError),
    Augment(AugmentError),
    Model(ModelError),
    Metric(MetricError),
    /// Loss became non-finite; training aborts rather than continuing.
    Numerical {
        epoch: usize,
        step: usize,
    },
    Io(std::io::Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(why) => write!(f, "bad training config: {why}"),
            TrainError::Wav(e) => write!(f, "{e}"),
            TrainError::Manifest(e) => write!(f, "{e}"),
            TrainError::Split(e) => write!(f, "{e}"),
            TrainError::Preprocess(e) => write!(f, "{e}"),
            TrainError::Feature(e) => write!(f, "{e}"),
            TrainError::Augment(e) => write!(f, "{e}"),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Metric(e) => write!(f, "{e}"),
            TrainError::Numerical { epoch, step } => {
                write!(
                    f,
                    "numerical failure: non-finite loss at epoch {epoch}, step {step}"
                )
            }
            TrainError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for TrainError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for TrainError {
            fn from(e: $ty) -> Self {
                TrainError::$variant(e)
            }
        }
    };
}

from_err!(Wav, WavError);
from_err!(Manifest, ManifestError);
from_err!(Split, SplitError);
from_err!(Preprocess, PreprocessError);
from_err!(Feature, FeatureError);
from_err!(Augment, AugmentError);
from_err!(Model, ModelError);
from_err!(Metric, MetricError);
from_err!(Io, std::io::Error);

/// One scored validation sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

/// Per-run evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub roc_auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub config_fingerprint: String,
    pub scores: Vec<ScoreRow>,
}

/// Diagnostics collected while training.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    /// Mean batch loss per optimizer step.
    pub step_losses: Vec<f64>,
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Fusion gate value after each epoch (dual-input runs only).
    pub alpha_per_epoch: Vec<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub report: EvalReport,
    pub trace: TrainTrace,
}

/// One ready-to-train example: identity, label, and the preprocessed (or
/// raw, in the no-preprocess arm) waveforms.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub label: u8,
    pub primary: AudioClip,
    pub secondary: Option<AudioClip>,
}

/// FNV-1a fingerprint over the serialized run configuration.
pub fn config_fingerprint(scenario: Scenario, cfg: &TrainConfig, pipe: &PipelineConfig) -> String {
    let payload = serde_json::json!({
        "scenario": scenario,
        "train": cfg,
        "pipeline": pipe,
    })
    .to_string();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in payload.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

fn prepare_wave(
    clip: &AudioClip,
    scenario: Scenario,
    pipe: &PipelineConfig,
) -> Result<AudioClip, TrainError> {
    let resampled = if clip.sample_rate == PIPELINE_RATE {
        clip.clone()
    } else {
        resample_linear(clip, PIPELINE_RATE)
    };
    if scenario.preprocess_enabled() {
        Ok(preprocess_pipeline(&resampled, &pipe.preprocess)?.clip)
    } else {
        Ok(resampled)
    }
}

/// Loads and preprocess-caches the examples a scenario needs from manifest
/// entries, resolving clip paths against `base_dir`.
pub fn load_examples(
    entries: &[ManifestEntry],
    scenario: Scenario,
    pipe: &PipelineConfig,
    base_dir: &Path,
) -> Result<Vec<Example>, TrainError> {
    let resolve = |entry: &ManifestEntry| {
        if entry.clip_path.is_absolute() {
            entry.clip_path.clone()
        } else {
            base_dir.join(&entry.clip_path)
        }
    };

    let mut examples = Vec::new();
    match scenario {
        Scenario::D2c => {
            for entry in entries.iter().filter(|e| e.modality == Modality::Breath) {
                let clip = load_wav(&resolve(entry))?;
                examples.push(Example {
                    id: entry.clip_path.display().to_string(),
                    label: entry.label,
                    primary: prepare_wave(&clip, scenario, pipe)?,
                    secondary: None,
                });
            }
        }
        Scenario::B2c => {
            let breaths: Vec<&ManifestEntry> = entries
                .iter()
                .filter(|e| e.modality == Modality::Breath)
                .collect();
            for entry in entries.iter().filter(|e| e.modality == Modality::Cough) {
                let breath = breaths
                    .iter()
                    .find(|b| b.subject_id == entry.subject_id)
                    .ok_or_else(|| {
                        TrainError::Config(format!(
                            "subject `{}` has no breath clip for the dual-input run",
                            entry.subject_id
                        ))
                    })?;
                let cough_clip = load_wav(&resolve(entry))?;
                let breath_clip = load_wav(&resolve(breath))?;
                examples.push(Example {
                    id: entry.clip_path.display().to_string(),
                    label: entry.label,
                    primary: prepare_wave(&cough_clip, scenario, pipe)?,
                    secondary: Some(prepare_wave(&breath_clip, scenario, pipe)?),
                });
            }
        }
        _ => {
            for entry in entries.iter().filter(|e| e.modality == Modality::Cough) {
                let clip = load_wav(&resolve(entry))?;
                examples.push(Example {
                    id: entry.clip_path.display().to_string(),
                    label: entry.label,
                    primary: prepare_wave(&clip, scenario, pipe)?,
                    secondary: None,
                });
            }
        }
    }
    Ok(examples)
}

enum Mode {
    Train { augment_seed: u64 },
    Eval,
}

fn frontend(
    clip: &AudioClip,
    scenario: Scenario,
    pipe: &PipelineConfig,
) -> Result<FeatureMatrix, TrainError> {
    if scenario.raw_frontend() {
        Ok(raw_frame_features(clip, &pipe.frontend)?)
    } else {
        Ok(log_mel_features(clip, &pipe.frontend)?)
    }
}

fn wave_to_features(
    clip: &AudioClip,
    scenario: Scenario,
    pipe: &PipelineConfig,
    mode: &Mode,
    stream: u64,
) -> Result<FeatureMatrix, TrainError> {
    // augmentation (random crop, shift, masking) applies only to training
    // examples in scenarios that keep it enabled
    let augment_seed = match mode {
        Mode::Train { augment_seed } if scenario.augment_enabled() => Some(*augment_seed),
        _ => None,
    };
    let crop = match augment_seed {
        Some(seed) => CropMode::Random {
            seed: derive_seed(seed, &[stream, 0]),
        },
        None => CropMode::Start,
    };
    let mut wave = fix_length(clip, pipe.augment.segment_sec, crop)?;
    if let Some(seed) = augment_seed {
        wave = random_shift(&wave, &pipe.augment, derive_seed(seed, &[stream, 1]))?;
    }
    let mut feats = frontend(&wave, scenario, pipe)?;
    if let Some(seed) = augment_seed {
        feats = feature_mask(&feats, &pipe.augment, derive_seed(seed, &[stream, 2]));
    }
    Ok(feats)
}

/// Builds the full forward graph for one example and returns the predicted
/// probability node.
fn example_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    enc_cfg: &EtEncoderConfig,
    scenario: Scenario,
    pipe: &PipelineConfig,
    example: &Example,
    mode: &Mode,
) -> Result<crate::model::TensorRef, TrainError> {
    let feats = wave_to_features(&example.primary, scenario, pipe, mode, 0)?;
    let emb = encoder_forward(tape, bound, enc_cfg, &feats)?;
    let emb = if scenario == Scenario::B2c {
        let breath = example.secondary.as_ref().ok_or_else(|| {
            TrainError::Config(format!("example `{}` lacks a breath clip", example.id))
        })?;
        let breath_feats = wave_to_features(breath, scenario, pipe, mode, 1)?;
        let breath_emb = encoder_forward(tape, bound, enc_cfg, &breath_feats)?;
        fuse_alpha(tape, bound.get(P_RAW_ALPHA), emb, breath_emb)?
    } else {
        emb
    };
    Ok(classifier_forward(tape, bound, emb)?)
}

fn encoder_config_for(scenario: Scenario, pipe: &PipelineConfig) -> EtEncoderConfig {
    let mut enc = pipe.encoder.clone();
    enc.in_dim = if scenario.raw_frontend() {
        1
    } else {
        pipe.frontend.mel_bins
    };
    enc
}

/// Scores a set of examples with fixed parameters (deterministic crop, no
/// augmentation).
pub fn score_examples(
    params: &ParamSet,
    examples: &[Example],
    scenario: Scenario,
    pipe: &PipelineConfig,
) -> Result<Vec<ScoreRow>, TrainError> {
    let enc_cfg = encoder_config_for(scenario, pipe);
    let mut rows = Vec::with_capacity(examples.len());
    for example in examples {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params);
        let prob = example_forward(
            &mut tape,
            &bound,
            &enc_cfg,
            scenario,
            pipe,
            example,
            &Mode::Eval,
        )?;
        rows.push(ScoreRow {
            id: example.id.clone(),
            score: tape.value_scalar(prob),
            label: example.label,
        });
    }
    Ok(rows)
}

/// Trains on in-memory examples. Fully deterministic in `cfg.seed`: the
/// shuffle order, every augmentation draw, and the parameter init all derive
/// from it.
pub fn train_on_examples(
    train_set: &[Example],
    val_set: &[Example],
    scenario: Scenario,
    cfg: &TrainConfig,
    pipe: &PipelineConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let enc_cfg = encoder_config_for(scenario, pipe);
    let mut params = init_model_params(
        &enc_cfg,
        &pipe.classifier,
        scenario == Scenario::B2c,
        derive_seed(cfg.seed, &[0xC2C]),
    )?;
    let mut adam = AdamState::new(&params);
    let mut grads = GradBuffer::zeros(&params);
    let mut trace = TrainTrace::default();

    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::new(derive_seed(cfg.seed, &[1, epoch as u64])).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.reset();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let mut tape = Tape::new();
                let bound = BoundParams::bind(&mut tape, &params);
                let mode = Mode::Train {
                    augment_seed: derive_seed(cfg.seed, &[2, epoch as u64, idx as u64]),
                };
                let prob = example_forward(
                    &mut tape,
                    &bound,
                    &enc_cfg,
                    scenario,
                    pipe,
                    &train_set[idx],
                    &mode,
                )?;
                let loss = tape.bce(prob, train_set[idx].label as f64)?;
                batch_loss += tape.value_scalar(loss);
                tape.backward(loss)?;
                grads.accumulate(&tape, &bound);
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(TrainError::Numerical { epoch, step });
            }
            grads.scale(1.0 / batch.len() as f64);
            let lr = lr_schedule(epoch as f64 + step as f64 / steps_per_epoch as f64, cfg);
            adam.step(&mut params, &grads, lr)?;
            trace.step_losses.push(batch_loss);
            epoch_loss += batch_loss;
        }
        trace.epoch_losses.push(epoch_loss / steps_per_epoch as f64);
        if scenario == Scenario::B2c {
            let raw_alpha = params.get(P_RAW_ALPHA).map(|t| t.values[0]).unwrap_or(0.0);
            trace
                .alpha_per_epoch
                .push(AlphaFusion { raw_alpha }.alpha());
        }
    }

    let scores = score_examples(&params, val_set, scenario, pipe)?;
    let report = build_report(scenario, cfg, pipe, scores)?;
    Ok(TrainOutcome {
        params,
        report,
        trace,
    })
}

fn build_report(
    scenario: Scenario,
    cfg: &TrainConfig,
    pipe: &PipelineConfig,
    scores: Vec<ScoreRow>,
) -> Result<EvalReport, TrainError> {
    let scored: Vec<(f64, u8)> = scores.iter().map(|r| (r.score, r.label)).collect();
    let auc = roc_auc(&scored)?;
    let n_pos = scores.iter().filter(|r| r.label == 1).count();
    Ok(EvalReport {
        scenario,
        roc_auc: auc,
        n_pos,
        n_neg: scores.len() - n_pos,
        config_fingerprint: config_fingerprint(scenario, cfg, pipe),
        scores,
    })
}

/// Loads a split from disk and trains one scenario.
pub fn train(
    split: &DatasetSplit,
    scenario: Scenario,
    cfg: &TrainConfig,
    pipe: &PipelineConfig,
    base_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    let train_set = load_examples(&split.train, scenario, pipe, base_dir)?;
    let val_set = load_examples(&split.validation, scenario, pipe, base_dir)?;
    train_on_examples(&train_set, &val_set, scenario, cfg, pipe)
}

/// Evaluates fixed parameters over every matching entry of a manifest.
pub fn evaluate(
    params: &ParamSet,
    entries: &[ManifestEntry],
    scenario: Scenario,
    cfg: &TrainConfig,
    pipe: &PipelineConfig,
    base_dir: &Path,
) -> Result<EvalReport, TrainError> {
    let examples = load_examples(entries, scenario, pipe, base_dir)?;
    let scores = score_examples(params, &examples, scenario, pipe)?;
    build_report(scenario, cfg, pipe, scores)
}

/// Relative performance change against a baseline, in percent.
pub fn performance_variation(auc: f64, baseline: f64) -> f64 {
    100.0 * (auc - baseline) / baseline
}

pub struct AblationOutcome {
    /// Baseline first, then descending ROC-AUC.
    pub reports: Vec<EvalReport>,
    pub skipped: Vec<(Scenario, String)>,
}

/// Runs every scenario with a shared seed and collates the comparison.
/// Scenarios needing the breath modality are skipped with a warning when the
/// manifest has none.
pub fn run_ablation_suite(
    manifest_path: &Path,
    cfg: &TrainConfig,
    pipe: &PipelineConfig,
    val_fraction: f64,
) -> Result<AblationOutcome, TrainError> {
    let entries = load_manifest(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let split = split_dataset(&entries, val_fraction, cfg.seed)?;
    let has_breath = entries.iter().any(|e| e.modality == Modality::Breath);

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for scenario in Scenario::all() {
        if scenario.uses_breath() && !has_breath {
            skipped.push((
                scenario,
                format!("manifest has no breath clips; skipping {scenario}"),
            ));
            continue;
        }
        let outcome = train(&split, scenario, cfg, pipe, &base_dir)?;
        reports.push(outcome.report);
    }
    sort_reports(&mut reports);
    Ok(AblationOutcome { reports, skipped })
}

/// Baseline first, remaining rows by descending ROC-AUC.
pub fn sort_reports(reports: &mut [EvalReport]) {
    reports.sort_by(|a, b| {
        let a_base = a.scenario == Scenario::C2c;
        let b_base = b.scenario == Scenario::C2c;
        b_base.cmp(&a_base).then(b.roc_auc.total_cmp(&a.roc_auc))
    });
}

fn variation_cell(report: &EvalReport, baseline: Option<f64>) -> String {
    if report.scenario == Scenario::C2c {
        "-".to_string()
    } else {
        match baseline {
            Some(base) => format!("{:.2}", performance_variation(report.roc_auc, base)),
            None => "n/a".to_string(),
        }
    }
}

/// Aligned plain-text comparison table.
pub fn render_ablation_table(reports: &[EvalReport]) -> String {
    let baseline = reports
        .iter()
        .find(|r| r.scenario == Scenario::C2c)
        .map(|r| r.roc_auc);
    let mut rows = vec![(
        "scenario".to_string(),
        "ROC-AUC".to_string(),
        "variation (%)".to_string(),
    )];
    for r in reports {
        rows.push((
            r.scenario.name().to_string(),
            format!("{:.4}", r.roc_auc),
            variation_cell(r, baseline),
        ));
    }
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap();
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap();
    let w2 = rows.iter().map(|r| r.2.len()).max().unwrap();
    let mut out = String::new();
    for (i, (a, b, c)) in rows.iter().enumerate() {
        out.push_str(&format!("{a:<w0$}  {b:>w1$}  {c:>w2$}\n"));
        if i == 0 {
            out.push_str(&format!("{}\n", "-".repeat(w0 + w1 + w2 + 4)));
        }
    }
    out
}

/// CSV rendering of the same table.
pub fn render_ablation_csv(reports: &[EvalReport]) -> String {
    let baseline = reports
        .iter()
        .find(|r| r.scenario == Scenario::C2c)
        .map(|r| r.roc_auc);
    let mut out = String::from("scenario,roc_auc,variation_pct\n");
    for r in reports {
        let variation = if r.scenario == Scenario::C2c {
            "-".to_string()
        } else {
            match baseline {
                Some(base) => format!("{:.2}", performance_variation(r.roc_auc, base)),
                None => "n/a".to_string(),
            }
        };
        out.push_str(&format!(
            "{},{:.4},{}\n",
            r.scenario.name(),
            r.roc_auc,
            variation
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_clip, SynthSpec};

    fn tiny_pipe() -> PipelineConfig {
        PipelineConfig {
            encoder: EtEncoderConfig {
                channels: 16,
                se_bottleneck: 4,
                attn_hidden: 4,
                embed_dim: 8,
                ..EtEncoderConfig::default()
            },
            augment: AugmentConfig {
                segment_sec: 1.0,
                max_shift_sec: 0.25,
                ..AugmentConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    fn tiny_examples(n: usize, seed: u64) -> Vec<Example> {
        let spec = SynthSpec {
            n_clips: n,
            clip_sec: 1.5,
            bursts_per_clip: (1, 2),
            seed,
            ..SynthSpec::default()
        };
        (0..n)
            .map(|i| {
                let clip = generate_clip(&spec, i);
                Example {
                    id: format!("clip{i}"),
                    label: clip.label,
                    primary: preprocess_pipeline(&clip.audio, &PreprocessConfig::default())
                        .unwrap()
                        .clip,
                    secondary: None,
                }
            })
            .collect()
    }

    #[test]
    fn variation_reproduces_reference_arithmetic() {
        let v = performance_variation(0.5000, 0.7810);
        assert_eq!(format!("{v:.2}"), "-35.98");
        assert_eq!(
            format!("{:.2}", performance_variation(0.7810, 0.7810)),
            "0.00"
        );
    }

    #[test]
    fn fingerprint_stable_and_scenario_sensitive() {
        let cfg = TrainConfig::default();
        let pipe = PipelineConfig::default();
        let a = config_fingerprint(Scenario::C2c, &cfg, &pipe);
        let b = config_fingerprint(Scenario::C2c, &cfg, &pipe);
        let c = config_fingerprint(Scenario::D2c, &cfg, &pipe);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn train_is_deterministic() {
        let pipe = tiny_pipe();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr_max: 0.01,
            cycle_len_epochs: 2,
            warmup_epochs: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let examples = tiny_examples(8, 5);
        let (train_set, val_set) = examples.split_at(6);
        let a = train_on_examples(train_set, val_set, Scenario::C2c, &cfg, &pipe).unwrap();
        let b = train_on_examples(train_set, val_set, Scenario::C2c, &cfg, &pipe).unwrap();
        assert_eq!(a.report.roc_auc.to_bits(), b.report.roc_auc.to_bits());
        for (x, y) in a.report.scores.iter().zip(b.report.scores.iter()) {
            assert_eq!(x.score.to_bits(), y.score.to_bits());
            assert_eq!(x.id, y.id);
        }
    }

    #[test]
    fn loss_descends_on_single_repeated_example() {
        let pipe = tiny_pipe();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 1,
            lr_max: 1e-3,
            lr_min: 1e-3 - 1e-12,
            cycle_len_epochs: 1000,
            warmup_epochs: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let examples = tiny_examples(2, 9);
        // single repeated example, no augmentation randomness
        let outcome = train_on_examples(
            &examples[..1],
            &examples[..2],
            Scenario::NoAugment,
            &cfg,
            &pipe,
        )
        .unwrap();
        let losses = &outcome.trace.step_losses;
        assert_eq!(losses.len(), 20);
        for w in losses.windows(2) {
            assert!(w[1] < w[0] + 1e-12, "loss did not descend: {w:?}");
        }
    }

    #[test]
    fn empty_train_set_is_config_error() {
        let pipe = tiny_pipe();
        let cfg = TrainConfig::default();
        match train_on_examples(&[], &[], Scenario::C2c, &cfg, &pipe).unwrap_err() {
            TrainError::Config(_) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_class_validation_is_metric_error() {
        let pipe = tiny_pipe();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let examples = tiny_examples(6, 2);
        let single: Vec<Example> = examples.iter().filter(|e| e.label == 1).cloned().collect();
        match train_on_examples(&examples, &single, Scenario::C2c, &cfg, &pipe).unwrap_err() {
            TrainError::Metric(MetricError::SingleClass { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_rows_sorted_baseline_first() {
        let mk = |scenario, auc| EvalReport {
            scenario,
            roc_auc: auc,
            n_pos: 1,
            n_neg: 1,
            config_fingerprint: "x".into(),
            scores: vec![],
        };
        let mut reports = vec![
            mk(Scenario::NoPreprocess, 0.5),
            mk(Scenario::NoAugment, 0.9),
            mk(Scenario::C2c, 0.8),
            mk(Scenario::RawFrontend, 0.6),
        ];
        sort_reports(&mut reports);
        assert_eq!(reports[0].scenario, Scenario::C2c);
        assert_eq!(reports[1].scenario, Scenario::NoAugment);
        assert_eq!(reports[2].scenario, Scenario::RawFrontend);
        assert_eq!(reports[3].scenario, Scenario::NoPreprocess);
        let table = render_ablation_table(&reports);
        assert!(table.contains("C2C"));
        assert!(table.lines().count() >= 6);
        let csv = render_ablation_csv(&reports);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "scenario,roc_auc,variation_pct");
        assert!(lines.next().unwrap().starts_with("C2C,0.8000,-"));
    }

    #[test]
    fn scenario_names_roundtrip() {
        for s in Scenario::all() {
            assert_eq!(Scenario::parse(s.name()), Some(s));
            let json = serde_json::to_string(&s).unwrap();
            let back: Scenario = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
        assert_eq!(Scenario::parse("bogus"), None);
    }

    #[test]
    fn report_serializes_with_named_fields() {
        let report = EvalReport {
            scenario: Scenario::C2c,
            roc_auc: 0.75,
            n_pos: 3,
            n_neg: 5,
            config_fingerprint: "abc".into(),
            scores: vec![ScoreRow {
                id: "clip0".into(),
                score: 0.9,
                label: 1,
            }],
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"scenario\":\"C2C\""));
        assert!(json.contains("\"roc_auc\":0.75"));
        assert!(json.contains("\"scores\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.scenario, Scenario::C2c);
        assert_eq!(back.scores.len(), 1);
    }
}
