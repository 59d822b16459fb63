//! Browser bindings: three interactive views over the pipeline, each
//! returning a JSON payload the demo page plots on a canvas.
//!
//! Build with `wasm-pack build --target web` and serve `www/`.

use wasm_bindgen::prelude::*;

use c2c_core::augment::AugmentConfig;
use c2c_core::features::log_mel_features;
use c2c_core::model::EtEncoderConfig;
use c2c_core::preprocess::{
    detect_cough_regions, normalize_peak, preprocess_pipeline, short_time_energy, PreprocessConfig,
};
use c2c_core::synth::{generate_clip, SynthSpec};
use c2c_core::train_eval::{
    roc_points, train_on_examples, Example, PipelineConfig, Scenario, TrainConfig,
};

fn demo_spec(seed: u32, snr_db: f64, clip_sec: f64) -> SynthSpec {
    SynthSpec {
        n_clips: 1,
        clip_sec,
        bursts_per_clip: (2, 3),
        snr_db,
        seed: seed as u64,
        ..SynthSpec::default()
    }
}

/// Min/max envelope per bucket, cheap to plot at any zoom.
fn envelope(samples: &[f64], buckets: usize) -> Vec<(f64, f64)> {
    let n = samples.len();
    let buckets = buckets.min(n).max(1);
    (0..buckets)
        .map(|b| {
            let lo = b * n / buckets;
            let hi = ((b + 1) * n / buckets).max(lo + 1);
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &s in &samples[lo..hi] {
                min = min.min(s);
                max = max.max(s);
            }
            (min, max)
        })
        .collect()
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Synthesizes a cough-like clip and runs burst detection with the given
/// thresholds. Returns waveform envelope, the short-time energy series,
/// detected regions, and the generator's ground truth.
#[wasm_bindgen]
pub fn segment_demo(seed: u32, snr_db: f64, onset: f64, offset: f64) -> String {
    let spec = demo_spec(seed, snr_db, 4.0);
    let clip = generate_clip(&spec, 0);
    let cfg = PreprocessConfig {
        onset_threshold: onset,
        offset_threshold: offset,
        ..PreprocessConfig::default()
    };
    if cfg.validate().is_err() {
        return serde_json::json!({ "error": "need onset > offset > 0" }).to_string();
    }
    let (normalized, _) = match normalize_peak(&clip.audio) {
        Ok(v) => v,
        Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
    };
    let ste = match short_time_energy(&normalized, &cfg) {
        Ok(v) => v,
        Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
    };
    let regions = detect_cough_regions(&ste, &cfg, normalized.len());
    let wave = envelope(&normalized.samples, 1200);
    serde_json::json!({
        "sample_rate": normalized.sample_rate,
        "n_samples": normalized.len(),
        "wave_min": wave.iter().map(|(lo, _)| round3(*lo)).collect::<Vec<_>>(),
        "wave_max": wave.iter().map(|(_, hi)| round3(*hi)).collect::<Vec<_>>(),
        "ste": ste.values.iter().map(|&v| round3(v)).collect::<Vec<_>>(),
        "hop": ste.hop_len,
        "window": ste.window_len,
        "regions": regions.iter()
            .map(|r| serde_json::json!({"start": r.start_sample, "end": r.end_sample}))
            .collect::<Vec<_>>(),
        "truth": clip.bursts.iter()
            .map(|&(s, e)| serde_json::json!({"start": s, "end": e}))
            .collect::<Vec<_>>(),
        "label": clip.label,
    })
    .to_string()
}

/// Log-mel spectrogram of the same synthetic clip, plus the burst truth so
/// the page can overlay it.
#[wasm_bindgen]
pub fn spectrogram_demo(seed: u32, snr_db: f64) -> String {
    let spec = demo_spec(seed, snr_db, 4.0);
    let clip = generate_clip(&spec, 0);
    let pre = match preprocess_pipeline(&clip.audio, &PreprocessConfig::default()) {
        Ok(v) => v,
        Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
    };
    let frontend = c2c_core::features::FrontendConfig::default();
    let feats = match log_mel_features(&pre.clip, &frontend) {
        Ok(v) => v,
        Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
    };
    let lo = feats.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = feats.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    serde_json::json!({
        "frames": feats.frames,
        "bins": feats.bins,
        "data": feats.data.iter().map(|&v| round3(v)).collect::<Vec<_>>(),
        "v_min": round3(lo),
        "v_max": round3(hi),
        "segmented_samples": pre.clip.len(),
        "regions": pre.regions.iter()
            .map(|r| serde_json::json!({"start": r.start_sample, "end": r.end_sample}))
            .collect::<Vec<_>>(),
        "label": clip.label,
        "f_min": frontend.f_min,
        "f_max": frontend.f_max,
    })
    .to_string()
}

/// Trains a miniature model on a small synthetic corpus right in the page
/// and reports the loss curve, validation ROC-AUC, and the ROC staircase.
#[wasm_bindgen]
pub fn train_demo(seed: u32, n_clips: u32, epochs: u32) -> String {
    let n_clips = (n_clips as usize).clamp(8, 40);
    let epochs = (epochs as usize).clamp(1, 40);
    let spec = SynthSpec {
        n_clips,
        clip_sec: 1.5,
        bursts_per_clip: (1, 2),
        snr_db: 30.0,
        seed: seed as u64,
        ..SynthSpec::default()
    };
    let pre_cfg = PreprocessConfig::default();
    let mut examples = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let clip = generate_clip(&spec, i);
        let pre = match preprocess_pipeline(&clip.audio, &pre_cfg) {
            Ok(v) => v,
            Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
        };
        examples.push(Example {
            id: format!("clip{i:02}"),
            label: clip.label,
            primary: pre.clip,
            secondary: None,
        });
    }
    // hold out adjacent index pairs; labels alternate, so the validation
    // set always contains both classes
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for (i, e) in examples.into_iter().enumerate() {
        if i % 8 < 2 {
            val_set.push(e);
        } else {
            train_set.push(e);
        }
    }
    let pipe = PipelineConfig {
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
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: 8,
        lr_max: 0.01,
        cycle_len_epochs: epochs.max(1),
        warmup_epochs: 1,
        seed: seed as u64,
        ..TrainConfig::default()
    };
    let outcome = match train_on_examples(&train_set, &val_set, Scenario::C2c, &cfg, &pipe) {
        Ok(v) => v,
        Err(e) => return serde_json::json!({ "error": e.to_string() }).to_string(),
    };
    let scored: Vec<(f64, u8)> = outcome
        .report
        .scores
        .iter()
        .map(|r| (r.score, r.label))
        .collect();
    serde_json::json!({
        "losses": outcome.trace.step_losses.iter().map(|&v| round3(v)).collect::<Vec<_>>(),
        "epoch_losses": outcome.trace.epoch_losses.iter().map(|&v| round3(v)).collect::<Vec<_>>(),
        "val_auc": outcome.report.roc_auc,
        "n_train": train_set.len(),
        "n_val": val_set.len(),
        "roc": roc_points(&scored),
        "scores": outcome.report.scores.iter()
            .map(|r| serde_json::json!({"id": r.id, "score": round3(r.score), "label": r.label}))
            .collect::<Vec<_>>(),
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_demo_payload_is_consistent() {
        let text = segment_demo(7, 30.0, 14.5, 0.1);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("error").is_none(), "{text}");
        assert_eq!(v["sample_rate"], 16000);
        let ste_len = v["ste"].as_array().unwrap().len();
        assert!(ste_len > 100);
        assert_eq!(
            v["wave_min"].as_array().unwrap().len(),
            v["wave_max"].as_array().unwrap().len()
        );
        // detections line up with truth at this SNR and default thresholds
        assert_eq!(
            v["regions"].as_array().unwrap().len(),
            v["truth"].as_array().unwrap().len()
        );
    }

    #[test]
    fn segment_demo_threshold_validation() {
        let text = segment_demo(7, 30.0, 0.05, 0.1);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("error").is_some());
    }

    #[test]
    fn spectrogram_demo_shape() {
        let text = spectrogram_demo(3, 30.0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("error").is_none(), "{text}");
        let frames = v["frames"].as_u64().unwrap() as usize;
        let bins = v["bins"].as_u64().unwrap() as usize;
        assert_eq!(bins, 40);
        assert_eq!(v["data"].as_array().unwrap().len(), frames * bins);
        assert!(v["v_min"].as_f64().unwrap() <= v["v_max"].as_f64().unwrap());
    }

    #[test]
    fn train_demo_learns_and_reports() {
        let text = train_demo(5, 16, 8);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("error").is_none(), "{text}");
        let auc = v["val_auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(auc >= 0.75, "expected a learnable demo corpus, got {auc}");
        let losses = v["losses"].as_array().unwrap();
        assert!(!losses.is_empty());
        let roc = v["roc"].as_array().unwrap();
        assert!(roc.len() >= 2);
    }

    #[test]
    fn demos_are_deterministic() {
        assert_eq!(
            segment_demo(9, 30.0, 14.5, 0.1),
            segment_demo(9, 30.0, 14.5, 0.1)
        );
        assert_eq!(train_demo(9, 12, 3), train_demo(9, 12, 3));
    }
}
